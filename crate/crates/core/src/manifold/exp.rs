//! Matrix exponential and principal logarithm on skew-symmetric / rotation blocks.

use std::f64::consts::PI;

use nalgebra::{DVector, SymmetricEigen};

use super::SkewBlock;
use crate::error::{Result, SyncError};
use crate::linalg::{skew_part, sym_part, Mat};

const SERIES_TERMS: usize = 18;

/// Rotation angles this close to pi have no usable principal logarithm.
const PI_ANGLE_TOL: f64 = 1e-10;

/// `exp(E) - I` without forming the identity, so small steps keep full
/// relative accuracy.
pub fn skew_expm1(e: &Mat) -> Mat {
    let d = e.nrows();
    match d {
        0 | 1 => Mat::zeros(d, d),
        2 => {
            let theta = e[(1, 0)];
            let half = (0.5 * theta).sin();
            let c1 = -2.0 * half * half;
            let s = theta.sin();
            Mat::from_row_slice(2, 2, &[c1, -s, s, c1])
        }
        3 => {
            // Rodrigues with rotation angle |E|_F / sqrt(2)
            let theta = e.norm() / std::f64::consts::SQRT_2;
            let (a, b) = if theta < 1e-6 {
                let t2 = theta * theta;
                (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
            } else {
                let half = (0.5 * theta).sin();
                (theta.sin() / theta, 2.0 * half * half / (theta * theta))
            };
            e * a + (e * e) * b
        }
        _ => expm1_scaling_squaring(e),
    }
}

fn expm1_scaling_squaring(e: &Mat) -> Mat {
    let norm = e.norm();
    let halvings = if norm > 1.0 { norm.log2().ceil() as i32 } else { 0 };
    let a = e / 2f64.powi(halvings);
    let mut term = a.clone();
    let mut sum = a.clone();
    for k in 2..=SERIES_TERMS {
        term = (&term * &a) / k as f64;
        sum += &term;
    }
    // (I + X)^2 - I = 2X + X^2
    for _ in 0..halvings {
        sum = &sum * 2.0 + &sum * &sum;
    }
    sum
}

pub fn skew_exp(e: &SkewBlock) -> Mat {
    let m = e.as_mat();
    skew_expm1(m) + Mat::identity(m.nrows(), m.nrows())
}

/// Principal logarithm of a rotation block. Fails when some rotation angle
/// is pi or the block lies in the reflection component.
pub fn skew_log(r: &Mat) -> Result<SkewBlock> {
    let d = r.nrows();
    if r.ncols() != d {
        return Err(SyncError::Dimension(format!("{}x{} block", d, r.ncols())));
    }
    if d <= 1 {
        return Ok(SkewBlock::zero(d));
    }
    let det = r.determinant();
    if det <= 0.0 {
        return Err(SyncError::WrongComponent(det));
    }
    if d == 2 {
        let theta = (r[(1, 0)] - r[(0, 1)]).atan2(r[(0, 0)] + r[(1, 1)]);
        if PI - theta.abs() < PI_ANGLE_TOL {
            return Err(SyncError::BranchAmbiguity);
        }
        return Ok(SkewBlock::from_mat_unchecked(Mat::from_row_slice(
            2,
            2,
            &[0.0, -theta, theta, 0.0],
        )));
    }
    // R is normal, so its symmetric part S and skew part K commute. On each
    // eigenvector v of S (eigenvalue cos t) |K v| = sin t, and
    // log R = g(S) K with g = t / sin t.
    let s = sym_part(r);
    let k = skew_part(r);
    let eig = SymmetricEigen::new(s);
    let mut g = DVector::zeros(d);
    for i in 0..d {
        let v = eig.eigenvectors.column(i);
        let c = eig.eigenvalues[i];
        let sin = (&k * v).norm();
        let theta = sin.atan2(c);
        if PI - theta < PI_ANGLE_TOL {
            return Err(SyncError::BranchAmbiguity);
        }
        g[i] = if sin < 1e-8 { 1.0 + theta * theta / 6.0 } else { theta / sin };
    }
    let v = &eig.eigenvectors;
    let gs = v * Mat::from_diagonal(&g) * v.transpose();
    Ok(SkewBlock::from_skew_part(&(gs * k)))
}
