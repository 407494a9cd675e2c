//! Checks on the geometry itself: distance comparisons, the injectivity
//! radius of the rotation group, and a first-order critical point that is
//! not a maximizer.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::checks::{align_onto, anchor, class_distance_nuclear, concavity_spectrum, CurvatureProbe};
use super::report::{worst_of, CheckEntry};
use crate::error::Result;
use crate::linalg::{block, skew_part, sym_part, Mat};
use crate::manifold::{riemannian_dist_stack, skew_exp, skew_log, Group, RotationStack, SkewBlock, SkewStack};
use crate::problem::random_rotation_stack;
use crate::quotient::{objective, objective_difference, quotient_riem_dist, riemannian_grad};
use crate::rng::{stream, Domain};

/// `d_inf <= d_F <= d^Q <= d^G` for two stacks in the same component.
pub fn check_distance_chain(x: &RotationStack, y: &RotationStack) -> Vec<CheckEntry> {
    let names = ["chain/inf-le-f", "chain/f-le-quotient", "chain/quotient-le-total"];
    let inapplicable = |why: String| -> Vec<CheckEntry> {
        names.iter().map(|c| CheckEntry::inapplicable(c, anchor::DISTANCE_CHAIN, why.clone())).collect()
    };
    let a = match align_onto(x.as_mat(), y.as_mat()) {
        Ok(a) => a,
        Err(e) => return inapplicable(e.to_string()),
    };
    let dq = match quotient_riem_dist(x, y) {
        Ok(q) => q.value,
        Err(e) => return inapplicable(format!("geodesic class distance undefined: {e}")),
    };
    let dg = match riemannian_dist_stack(x, y) {
        Ok(v) => v,
        Err(e) => return inapplicable(format!("geodesic distance undefined: {e}")),
    };
    let scale = (x.n() as f64).sqrt();
    vec![
        CheckEntry::at_most(names[0], anchor::DISTANCE_CHAIN, a.dist_inf, a.dist_f, scale),
        CheckEntry::at_most(names[1], anchor::DISTANCE_CHAIN, a.dist_f, dq, scale),
        CheckEntry::at_most(names[2], anchor::DISTANCE_CHAIN, dq, dg, scale),
    ]
}

/// Plane rotation generator with angle `theta` in coordinates `(0, 1)`.
pub fn plane_generator(d: usize, theta: f64) -> Mat {
    let mut m = Mat::zeros(d, d);
    m[(1, 0)] = theta;
    m[(0, 1)] = -theta;
    m
}

/// Random skew block with Frobenius norm drawn uniformly in `[0, max_norm]`.
pub fn random_skew_with_norm<R: Rng>(rng: &mut R, d: usize, max_norm: f64) -> Mat {
    let raw = Mat::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let k = skew_part(&raw);
    let target: f64 = rng.gen::<f64>() * max_norm;
    let norm = k.norm();
    if norm == 0.0 {
        k
    } else {
        k * (target / norm)
    }
}

/// Injectivity radius `sqrt(2) pi` of `SO(3)`: a closed geodesic of length
/// `2 sqrt(2) pi`, exact log/exp round trips strictly inside the radius and a
/// failing round trip just beyond a plane angle of pi.
pub fn check_radius(samples: usize, seed: u64) -> Vec<CheckEntry> {
    let d = 3;
    let lambda = plane_generator(d, 2.0 * PI);
    let closed = (skew_exp(&SkewBlock::from_skew_part(&lambda)) - Mat::identity(d, d)).norm();
    let length = lambda.norm();
    let radius = SQRT_2 * PI;

    let mut roundtrip = Vec::new();
    for s in 0..samples {
        let mut rng = stream(seed, Domain::Probe, s, 1);
        let e = random_skew_with_norm(&mut rng, d, radius - 1e-2);
        let back = skew_log(&skew_exp(&SkewBlock::from_skew_part(&e))).map(|b| (b.as_mat() - &e).norm());
        let err = back.unwrap_or(f64::INFINITY);
        roundtrip.push(CheckEntry::at_most("radius/roundtrip", anchor::RADIUS, err, 1e-10, 0.0));
    }

    let beyond = plane_generator(d, PI + 0.01);
    let beyond_err = skew_log(&skew_exp(&SkewBlock::from_skew_part(&beyond)))
        .map(|b| (b.as_mat() - &beyond).norm())
        .unwrap_or(f64::INFINITY);

    vec![
        CheckEntry::at_most("radius/closed-geodesic", anchor::RADIUS, closed, 1e-10, 0.0)
            .with_note(format!("generator norm {length:.15}")),
        CheckEntry::at_most("radius/closed-geodesic-length", anchor::RADIUS, (length - 2.0 * radius).abs(), 1e-12, 0.0),
        worst_of(roundtrip, "radius/roundtrip", anchor::RADIUS),
        CheckEntry::at_least("radius/beyond-fails", anchor::RADIUS, beyond_err, 1e-3, 0.0),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct FocpReport {
    pub n: usize,
    pub grad_norm: f64,
    /// `f(G_hat) - f(G)`.
    pub objective_gap: f64,
    /// Class distance from the procrustes alignment.
    pub dist_f: f64,
    /// Class distance from the nuclear-norm formula.
    pub dist_f_nuclear: f64,
    /// Largest `<Hess H, H> / |H|^2` over horizontal `H`; positive means the
    /// objective still increases along some direction.
    pub max_ascent_curvature: f64,
    pub entries: Vec<CheckEntry>,
}

/// Noiseless planar instance where the first block is negated: a critical
/// point with a strictly smaller objective.
pub fn focp_example(n: usize, seed: u64) -> Result<FocpReport> {
    let d = 2;
    let g_hat = random_rotation_stack(n, d, seed)?;
    let c = g_hat.as_mat() * g_hat.as_mat().transpose();
    let mut flipped = g_hat.as_mat().clone();
    let first = -block(&flipped, 0, d);
    flipped.rows_mut(0, d).copy_from(&first);
    let g = RotationStack::new(flipped, d, Group::O)?;

    let grad_norm = riemannian_grad(&c, &g).norm();
    let objective_gap = objective_difference(&c, g_hat.as_mat(), g.as_mat());
    let dist_f = align_onto(g.as_mat(), g_hat.as_mat())?.dist_f;
    let dist_f_nuclear = class_distance_nuclear(g.as_mat(), g_hat.as_mat());
    let probe = CurvatureProbe { exhaustive_limit: usize::MAX, ..CurvatureProbe::default() };
    let (lo, _, _) = concavity_spectrum(&c, &g, probe)?;
    let max_ascent_curvature = -lo;

    let nf = n as f64;
    let entries = vec![
        CheckEntry::at_most("focp/gradient", anchor::FOCP, grad_norm, 1e-12, 0.0),
        CheckEntry::at_least("focp/objective-gap", anchor::FOCP, objective_gap, 0.0, 0.0)
            .with_note(format!("f(G) = {:.6}, f(G_hat) = {:.6}", objective(&c, &g), objective(&c, &g_hat))),
        CheckEntry::at_least("focp/ascent-direction", anchor::FOCP, max_ascent_curvature, 0.0, 0.0),
        CheckEntry::at_most("focp/distance-oracles-agree", anchor::FOCP, (dist_f - dist_f_nuclear).abs(), 0.0, 1e-3 * nf),
    ];
    Ok(FocpReport { n, grad_norm, objective_gap, dist_f, dist_f_nuclear, max_ascent_curvature, entries })
}

/// `g q - g_hat` split at `g_hat` into horizontal, vertical and normal parts.
#[derive(Debug, Clone)]
pub struct AlignmentDecomposition {
    pub q: Mat,
    pub horizontal: SkewStack,
    pub vertical: SkewStack,
    /// Ambient normal component `g_hat_i sym(g_hat_i^T X_i)`.
    pub normal: Mat,
    pub residual: f64,
}

pub fn alignment_decomposition(g: &RotationStack, g_hat: &RotationStack) -> Result<AlignmentDecomposition> {
    let d = g.d();
    let n = g.n();
    let a = align_onto(g.as_mat(), g_hat.as_mat())?;
    let x = g.as_mat() * &a.q - g_hat.as_mat();
    let mut tangent = Mat::zeros(n * d, d);
    let mut normal = Mat::zeros(n * d, d);
    for i in 0..n {
        let gi = g_hat.block(i);
        let local = gi.transpose() * block(&x, i, d);
        tangent.rows_mut(i * d, d).copy_from(&skew_part(&local));
        normal.rows_mut(i * d, d).copy_from(&(&gi * sym_part(&local)));
    }
    let mut mean = Mat::zeros(d, d);
    for i in 0..n {
        mean += tangent.rows(i * d, d);
    }
    mean /= n as f64;
    let mut vertical = Mat::zeros(n * d, d);
    let mut horizontal = tangent.clone();
    for i in 0..n {
        vertical.rows_mut(i * d, d).copy_from(&mean);
        let mut rows = horizontal.rows_mut(i * d, d);
        rows -= &mean;
    }
    let horizontal = SkewStack::from_mat_unchecked(horizontal, d, true);
    let vertical = SkewStack::from_mat_unchecked(vertical, d, false);
    let rebuilt = horizontal.embed(g_hat) + vertical.embed(g_hat) + &normal;
    let residual = (rebuilt - &x).norm();
    Ok(AlignmentDecomposition { q: a.q, horizontal, vertical, normal, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_checks_pass() {
        for e in check_radius(200, 3) {
            assert!(e.passed(), "{e:?}");
        }
    }

    #[test]
    fn focp_distance_is_two_sqrt_two() {
        // flipping one planar block: |G^T G_hat|_* = 2(n - 2)
        let r = focp_example(7, 1).unwrap();
        assert!((r.dist_f_nuclear - 2.0 * SQRT_2).abs() < 1e-9);
        assert!((r.objective_gap - 8.0 * 6.0).abs() < 1e-9);
        for e in &r.entries {
            assert!(e.passed(), "{e:?}");
        }
    }

    #[test]
    fn decomposition_reconstructs_and_has_no_vertical_part() {
        let a = random_rotation_stack(6, 3, 1).unwrap();
        let b = random_rotation_stack(6, 3, 2).unwrap();
        let dec = alignment_decomposition(&a, &b).unwrap();
        assert!(dec.residual < 1e-12);
        // the optimal alignment makes g_hat^T g q symmetric
        assert!(dec.vertical.norm() < 1e-12, "{}", dec.vertical.norm());
    }
}
