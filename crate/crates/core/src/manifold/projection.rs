//! Nearest orthogonal / special-orthogonal matrix in Frobenius norm.

use nalgebra::SVD;

use crate::error::{Result, SyncError};
use crate::linalg::Mat;

/// Relative tolerance on singular values below which a projection is
/// treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

fn sorted_svd(z: &Mat) -> Result<(Mat, nalgebra::DVector<f64>, Mat)> {
    if !z.iter().all(|v| v.is_finite()) {
        return Err(SyncError::Invariant("non-finite block in projection".into()));
    }
    let svd = SVD::new(z.clone(), true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    Ok((u, svd.singular_values, vt))
}

/// Polar factor `U V^T` of a nonsingular square block.
pub fn project_orthogonal(z: &Mat) -> Result<Mat> {
    let (u, s, vt) = sorted_svd(z)?;
    let d = s.len();
    if d == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let sigma_min = s[d - 1];
    if sigma_min <= DEGENERACY_TOL * s[0].max(1.0) {
        return Err(SyncError::DegenerateProjection { sigma_min });
    }
    Ok(u * vt)
}

/// `U diag(1, .., 1, det(U V^T)) V^T`; unique when
/// `sigma_{d-1} + det(U V^T) sigma_d` stays away from zero.
pub fn project_special_orthogonal(z: &Mat) -> Result<Mat> {
    let (mut u, s, vt) = sorted_svd(z)?;
    let d = s.len();
    if d == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    if d == 1 {
        return Ok(Mat::identity(1, 1));
    }
    let sign = (&u * &vt).determinant().signum();
    let gap = s[d - 2] + sign * s[d - 1];
    if gap <= DEGENERACY_TOL * s[0].max(1.0) {
        return Err(SyncError::NonUniqueProjection { gap });
    }
    if sign < 0.0 {
        for r in 0..d {
            u[(r, d - 1)] = -u[(r, d - 1)];
        }
    }
    Ok(u * vt)
}
