//! Numerical certificates of the estimation-error, concavity, error-bound
//! and convergence guarantees on concrete instances.

use rand_distr::{Distribution, StandardNormal};

use super::report::{worst_of, CheckEntry};
use crate::error::Result;
use crate::estimators::{safe_rule, SolveTrace, SpectralInit};
use crate::linalg::{
    block, block_inf_norm, frob_dot, nuclear_norm, singular_values, skew_part, sorted_sym_eigen, sym_part, Mat,
};
use crate::manifold::{exp_map_stack, skew_log, RotationStack, SkewStack};
use crate::problem::{admissibility, Guarantee, Observation, RegionSpec};
use crate::quotient::{
    grad_from_cg, hess_vec_with_cg, horizontal_project, objective_difference, procrustes_align,
    Alignment,
};
use crate::rng::{stream, Domain};

pub mod anchor {
    pub const L2_ERROR: &str = "l2-estimation-error";
    pub const LINF_ERROR: &str = "linf-estimation-error";
    pub const STRONG_CONCAVITY: &str = "local-geodesic-strong-concavity";
    pub const ERROR_BOUND: &str = "riemannian-local-error-bound";
    pub const ASCENT: &str = "sufficient-ascent";
    pub const COST_TO_GO: &str = "cost-to-go";
    pub const GAP_IDENTITY: &str = "optimality-gap-identity";
    pub const LINEAR_RATE: &str = "linear-convergence";
    pub const STAY_IN_BALL: &str = "stay-in-ball";
    pub const SPECTRAL: &str = "spectral-estimation-error";
    pub const ALIGNMENT: &str = "alignment-rotation-bound";
    pub const DISTANCE_CHAIN: &str = "distance-chain";
    pub const RADIUS: &str = "injectivity-radius";
    pub const FOCP: &str = "first-order-critical-non-optimal";
}

/// Aligns `g` onto `reference`: `q = argmin |g Q - reference|_F`.
pub fn align_onto(g: &Mat, reference: &Mat) -> Result<Alignment> {
    procrustes_align(reference, g)
}

fn not_admissible(obs: &Observation, g: Guarantee) -> Option<String> {
    match admissibility(obs, g) {
        Ok(a) if a.holds() => None,
        Ok(a) => {
            let failed: Vec<String> = a
                .hypotheses
                .iter()
                .filter(|h| !h.pass)
                .map(|h| format!("{} = {:.4e} > {:.4e}", h.name, h.value, h.bound))
                .collect();
            Some(format!("noise hypotheses fail: {}", failed.join(", ")))
        }
        Err(e) => Some(e.to_string()),
    }
}

/// Estimation error of a candidate maximizer `g` (with `g^T g = n I` and
/// `f(g) >= f(G*)`): Frobenius distance, singular values of `G*^T g`, and the
/// smallest singular value of each block row `C_{i,:} g`.
pub fn check_l2_error(obs: &Observation, g: &Mat) -> Vec<CheckEntry> {
    let names = ["l2-error/dist-f", "l2-error/sv-lower", "l2-error/sv-upper", "l2-error/block-sv"];
    let inapplicable = |why: String| {
        names.iter().map(|c| CheckEntry::inapplicable(c, anchor::L2_ERROR, why.clone())).collect()
    };
    let (stats, delta, truth) = match obs.require_stats() {
        Ok(v) => v,
        Err(e) => return inapplicable(e.to_string()),
    };
    let (n, d) = (obs.n, obs.d);
    let nf = n as f64;
    let gram_resid = (g.transpose() * g - Mat::identity(d, d) * nf).norm();
    if gram_resid > 1e-8 * nf {
        return inapplicable(format!("g^T g differs from nI by {gram_resid:.3e}"));
    }
    let gain = objective_difference(&obs.c, g, truth.as_mat());
    if gain < -1e-9 * nf {
        return inapplicable(format!("f(g) is below f(G*) by {:.3e}", -gain));
    }
    let op = stats.op_norm_delta;
    let a = match align_onto(g, truth.as_mat()) {
        Ok(a) => a,
        Err(e) => return inapplicable(e.to_string()),
    };
    let sv = singular_values(&(truth.as_mat().transpose() * g));
    let sv_min = sv.min();
    let sv_max = sv.max();
    let sv_floor = nf - 8.0 * d as f64 * op * op / nf;
    let cg = &obs.c * g;
    let delta_g_inf = block_inf_norm(&(delta * g), d);
    let block_min = (0..n)
        .map(|i| singular_values(&block(&cg, i, d)).min())
        .fold(f64::INFINITY, f64::min);
    vec![
        CheckEntry::at_most(
            names[0],
            anchor::L2_ERROR,
            a.dist_f,
            4.0 * (d as f64).sqrt() * op / nf.sqrt(),
            nf.sqrt(),
        ),
        CheckEntry::at_least(names[1], anchor::L2_ERROR, sv_min, sv_floor, nf),
        CheckEntry::at_most(names[2], anchor::L2_ERROR, sv_max, nf, nf),
        CheckEntry::at_least(names[3], anchor::L2_ERROR, block_min, sv_floor - delta_g_inf, nf),
    ]
}

/// Block-wise error `|g Q* - G*|_inf <= 8 |Delta G*|_inf / n` for a global
/// maximizer or for the scaled top eigenvectors.
pub fn check_linf_error(obs: &Observation, g: &Mat, label: &str) -> CheckEntry {
    let check = format!("linf-error/{label}");
    let (stats, _, truth) = match obs.require_stats() {
        Ok(v) => v,
        Err(e) => return CheckEntry::inapplicable(&check, anchor::LINF_ERROR, e.to_string()),
    };
    let a = match align_onto(g, truth.as_mat()) {
        Ok(a) => a,
        Err(e) => return CheckEntry::inapplicable(&check, anchor::LINF_ERROR, e.to_string()),
    };
    let rhs = 8.0 * stats.delta_gstar_inf / obs.n as f64;
    let entry = CheckEntry::at_most(&check, anchor::LINF_ERROR, a.dist_inf, rhs, 1.0);
    match not_admissible(obs, Guarantee::LinfError) {
        Some(why) => entry.demote(why),
        None => entry,
    }
}

/// Position of `g` relative to the region around `g_hat`.
pub fn region_position(obs: &Observation, g_hat: &RotationStack, g: &Mat) -> Result<(RegionSpec, Alignment)> {
    let op = obs.stats.map(|s| s.op_norm_delta).unwrap_or(0.0);
    let region = RegionSpec::for_instance(obs.n, op);
    Ok((region, align_onto(g, g_hat.as_mat())?))
}

fn region_gate(obs: &Observation, g_hat: &RotationStack, g: &RotationStack) -> Option<String> {
    if let Some(why) = not_admissible(obs, Guarantee::LocalConcavity) {
        return Some(why);
    }
    match region_position(obs, g_hat, g.as_mat()) {
        Ok((region, a)) if region.contains(a.dist_f, a.dist_inf) => None,
        Ok((region, a)) => Some(format!(
            "point outside region (dist_f {:.3e} vs {:.3e}, dist_inf {:.3e} vs {:.3e})",
            a.dist_f, region.rho_f, a.dist_inf, region.rho_inf
        )),
        Err(e) => Some(e.to_string()),
    }
}

/// Orthonormal basis of the horizontal space: Helmert contrasts across
/// blocks tensored with the standard basis of skew matrices.
pub fn horizontal_basis(n: usize, d: usize) -> Vec<SkewStack> {
    let mut out = Vec::new();
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        let weights: Vec<f64> = (0..n)
            .map(|i| if i < k { 1.0 / norm } else if i == k { -(k as f64) / norm } else { 0.0 })
            .collect();
        for p in 0..d {
            for q in (p + 1)..d {
                let mut mat = Mat::zeros(n * d, d);
                for (i, w) in weights.iter().enumerate() {
                    if *w != 0.0 {
                        mat[(i * d + p, q)] = -w / std::f64::consts::SQRT_2;
                        mat[(i * d + q, p)] = w / std::f64::consts::SQRT_2;
                    }
                }
                out.push(SkewStack::from_mat_unchecked(mat, d, true));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct CurvatureProbe {
    /// Exhaustive basis when `nd` is at most this.
    pub exhaustive_limit: usize,
    pub probes: usize,
    pub seed: u64,
}

impl Default for CurvatureProbe {
    fn default() -> Self {
        CurvatureProbe { exhaustive_limit: 60, probes: 64, seed: 0 }
    }
}

/// Extreme values of `-<Hess H, H> / |H|^2` over horizontal `H`:
/// `(min, max, exhaustive)`.
pub fn concavity_spectrum(c: &Mat, g: &RotationStack, probe: CurvatureProbe) -> Result<(f64, f64, bool)> {
    let (n, d) = (g.n(), g.d());
    let cg = c * g.as_mat();
    if n * d <= probe.exhaustive_limit {
        let basis = horizontal_basis(n, d);
        let m = basis.len();
        if m == 0 {
            return Ok((f64::INFINITY, f64::NEG_INFINITY, true));
        }
        let images: Vec<SkewStack> = basis.iter().map(|b| hess_vec_with_cg(c, &cg, g, b)).collect();
        let gram = Mat::from_fn(m, m, |a, b| -0.5 * (images[a].dot(&basis[b]) + images[b].dot(&basis[a])));
        let (vals, _) = sorted_sym_eigen(&gram);
        return Ok((vals[m - 1], vals[0], true));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in 0..probe.probes {
        let mut rng = stream(probe.seed, Domain::Probe, p, 0);
        let raw = Mat::from_fn(n * d, d, |_, _| StandardNormal.sample(&mut rng));
        let h = horizontal_project(g, &SkewStack::from_blocks_skew_part(&raw, d))?;
        let q = -hess_vec_with_cg(c, &cg, g, &h).dot(&h) / h.dot(&h);
        lo = lo.min(q);
        hi = hi.max(q);
    }
    Ok((lo, hi, false))
}

/// Strong concavity `-<Hess f(G)[H], H> >= (n/5) |H|^2` for horizontal `H`
/// at a point `g` in the region around the maximizer `g_hat`.
pub fn check_hessian_pd(
    obs: &Observation,
    g_hat: &RotationStack,
    g: &RotationStack,
    probe: CurvatureProbe,
) -> CheckEntry {
    let check = "hessian-pd";
    let nf = obs.n as f64;
    let (lo, _, exhaustive) = match concavity_spectrum(&obs.c, g, probe) {
        Ok(v) => v,
        Err(e) => return CheckEntry::inapplicable(check, anchor::STRONG_CONCAVITY, e.to_string()),
    };
    let how = if exhaustive { "exhaustive basis" } else { "random probes" };
    let entry = CheckEntry::at_least(check, anchor::STRONG_CONCAVITY, lo, nf / 5.0, nf).with_note(how);
    match region_gate(obs, g_hat, g) {
        Some(why) => entry.demote(why),
        None => entry,
    }
}

/// Local error bound `d_F([g], [g_hat]) <= (10/n) |grad f(g)|_F` on every
/// supplied point inside the region; reports the worst case.
pub fn check_error_bound(obs: &Observation, g_hat: &RotationStack, points: &[RotationStack]) -> CheckEntry {
    let nf = obs.n as f64;
    let entries = points
        .iter()
        .map(|g| {
            let check = "error-bound";
            let Ok((_, a)) = region_position(obs, g_hat, g.as_mat()) else {
                return CheckEntry::inapplicable(check, anchor::ERROR_BOUND, "alignment failed");
            };
            let grad = grad_from_cg(&(&obs.c * g.as_mat()), g).norm();
            let rhs = 10.0 / nf * grad;
            let entry = CheckEntry::at_most(check, anchor::ERROR_BOUND, a.dist_f, rhs, rhs.max(1e-6));
            match region_gate(obs, g_hat, g) {
                Some(why) => entry.demote(why),
                None => entry,
            }
        })
        .collect();
    worst_of(entries, "error-bound", anchor::ERROR_BOUND)
}

/// `D(G) = Diag((M_i M_i^T)^{1/2}) - C` with `M_i = C_{i,:} G`; returns the
/// diagonal blocks `(M_i M_i^T)^{1/2}` stacked.
pub fn gap_operator_blocks(c: &Mat, g: &RotationStack) -> Mat {
    let d = g.d();
    let cg = c * g.as_mat();
    let mut out = Mat::zeros(g.n() * d, d);
    for i in 0..g.n() {
        let m = block(&cg, i, d);
        let svd = nalgebra::SVD::new(m, true, false);
        let u = svd.u.expect("u requested");
        let p = &u * Mat::from_diagonal(&svd.singular_values) * u.transpose();
        out.rows_mut(i * d, d).copy_from(&p);
    }
    out
}

/// `tr(E^T D(g_hat) E)` for `E = g q - g_hat`.
pub fn gap_quadratic(c: &Mat, d_blocks: &Mat, e: &Mat, d: usize) -> f64 {
    let n = e.nrows() / d;
    let mut diag = 0.0;
    for i in 0..n {
        let ei = block(e, i, d);
        diag += frob_dot(&ei, &(block(d_blocks, i, d) * &ei));
    }
    diag - frob_dot(e, &(c * e))
}

/// `f(g_hat) - f(g)` after aligning `g` onto `g_hat`.
///
/// With `E = g q - g_hat` and `g_hat_i^T (C g_hat)_i = S_i + K_i` (symmetric
/// plus skew), `f(g) - f(g_hat) = 2 sum_i <S_i + K_i, g_hat_i^T E_i> + <E, C E>`.
/// On the manifold the symmetric part of `g_hat_i^T E_i` is exactly
/// `-E_i^T E_i / 2`; using that instead of the rounded product keeps the
/// result accurate to second order in `E`.
pub fn optimality_gap(obs: &Observation, g_hat: &RotationStack, g: &RotationStack) -> Result<(f64, Alignment)> {
    let d = g.d();
    let a = align_onto(g.as_mat(), g_hat.as_mat())?;
    let e = g.as_mat() * &a.q - g_hat.as_mat();
    let cg = &obs.c * g_hat.as_mat();
    let mut linear = 0.0;
    for i in 0..g.n() {
        let gi = g_hat.block(i);
        let m = gi.transpose() * block(&cg, i, d);
        let ei = block(&e, i, d);
        let local = gi.transpose() * &ei;
        let sym_exact = -(ei.transpose() * &ei) * 0.5;
        linear += frob_dot(&sym_part(&m), &sym_exact) + frob_dot(&skew_part(&m), &skew_part(&local));
    }
    let gap = -(2.0 * linear + frob_dot(&e, &(&obs.c * &e)));
    Ok((gap, a))
}

/// `f(g_hat) - f(g)` by direct difference of the two traces.
pub fn optimality_gap_direct(obs: &Observation, g_hat: &RotationStack, g: &RotationStack) -> f64 {
    objective_difference(&obs.c, g_hat.as_mat(), g.as_mat())
}

/// Probe points for the gap identity, at distances from `1e-2` to `1`.
pub const GAP_PROBES: usize = 20;
/// Below this class distance the gap is too small to compare two formulas
/// to relative precision.
pub const GAP_IDENTITY_MIN_DIST: f64 = 1e-3;

fn gap_identity_entry(
    obs: &Observation,
    g_hat: &RotationStack,
    d_blocks: &Mat,
    g: &RotationStack,
    gap: f64,
    a: &Alignment,
) -> Option<CheckEntry> {
    if a.dist_f < GAP_IDENTITY_MIN_DIST {
        return None;
    }
    let e = g.as_mat() * &a.q - g_hat.as_mat();
    let quad = gap_quadratic(&obs.c, d_blocks, &e, obs.d);
    let rel = (gap - quad).abs() / gap.abs().max(quad.abs()).max(f64::MIN_POSITIVE);
    Some(CheckEntry::at_most("gap-identity", anchor::GAP_IDENTITY, rel, 1e-6, 0.0))
}

/// Sufficient ascent, stepsize admissibility, cost-to-go estimate and the
/// gap identity along a solver run.
pub fn check_ascent_and_gap(
    obs: &Observation,
    g_hat: &RotationStack,
    iterates: &[RotationStack],
    trace: &SolveTrace,
    alpha: f64,
) -> Vec<CheckEntry> {
    let (n, d) = (obs.n, obs.d);
    let nf = n as f64;
    let known = obs.require_stats().ok();
    let d_blocks = gap_operator_blocks(&obs.c, g_hat);

    let mut admissible = Vec::new();
    let mut ascent = Vec::new();
    let mut cost = Vec::new();
    let mut identity = Vec::new();

    let delta_ghat_inf = known.map(|(_, delta, _)| block_inf_norm(&(delta * g_hat.as_mat()), d));
    for (k, rec) in trace.records.iter().enumerate() {
        let Some(g) = iterates.get(k) else { break };
        if let (Some(a), Some(t)) = (rec.ascent, rec.stepsize) {
            let rhs = alpha * t * rec.grad_norm * rec.grad_norm;
            let mut entry = CheckEntry::at_least("sufficient-ascent", anchor::ASCENT, a, rhs, rhs.max(1e-300));
            match known {
                Some((stats, delta, _)) => {
                    let dg = block_inf_norm(&(delta * g.as_mat()), d);
                    let bound = safe_rule(n, d, alpha, stats.op_norm_delta, dg);
                    let adm = CheckEntry::at_most("stepsize-admissible", anchor::ASCENT, t, bound, 0.0);
                    if !adm.passed() {
                        entry = entry.demote("stepsize above the admissible bound");
                    }
                    admissible.push(adm);
                }
                None => entry = entry.demote("noise unknown: stepsize bound not checkable"),
            }
            ascent.push(entry);
        }
        let Ok((gap, a)) = optimality_gap(obs, g_hat, g) else { continue };
        if let (Some((stats, _, _)), Some(dgi)) = (known, delta_ghat_inf) {
            let rhs = (2.0 * nf + stats.op_norm_delta + dgi) * a.dist_f * a.dist_f;
            cost.push(CheckEntry::at_most("cost-to-go", anchor::COST_TO_GO, gap, rhs, rhs.max(1e-12 * nf)));
        }
        if let Some(entry) = gap_identity_entry(obs, g_hat, &d_blocks, g, gap, &a) {
            identity.push(entry);
        }
    }
    // the identity holds away from the maximizer too; probe it at moderate
    // distances since converged runs start very close
    for p in 0..GAP_PROBES {
        let mut rng = stream(obs.seed, Domain::Probe, p, 2);
        let raw = Mat::from_fn(n * d, d, |_, _| StandardNormal.sample(&mut rng));
        let Ok(h) = horizontal_project(g_hat, &SkewStack::from_blocks_skew_part(&raw, d)) else { continue };
        let len = 10f64.powf(-2.0 + 2.0 * p as f64 / GAP_PROBES as f64);
        let g = exp_map_stack(g_hat, &h, len / h.norm());
        let Ok((gap, a)) = optimality_gap(obs, g_hat, &g) else { continue };
        if let Some(entry) = gap_identity_entry(obs, g_hat, &d_blocks, &g, gap, &a) {
            identity.push(entry);
        }
    }
    vec![
        worst_of(admissible, "stepsize-admissible", anchor::ASCENT),
        worst_of(ascent, "sufficient-ascent", anchor::ASCENT),
        worst_of(cost, "cost-to-go", anchor::COST_TO_GO),
        worst_of(identity, "gap-identity", anchor::GAP_IDENTITY),
    ]
}

#[derive(Debug, Clone)]
pub struct RateFit {
    pub lambda_hat: f64,
    pub r_squared: f64,
    pub distance_ratio: f64,
    pub window: (usize, usize),
    pub max_relative_increase: f64,
    pub usable: usize,
}

/// Iterates closer than this (times `sqrt(n)`) to the reference are at the
/// floating-point floor and excluded from rate fits.
pub const RATE_DIST_FLOOR: f64 = 1e-9;

/// Fits the linear rate of `f(g_hat) - f(G^k)` over the middle third of the
/// iterations whose distance to `g_hat` is above the round-off floor.
pub fn fit_linear_rate(obs: &Observation, g_hat: &RotationStack, iterates: &[RotationStack]) -> Result<Option<RateFit>> {
    let floor = RATE_DIST_FLOOR * (obs.n as f64).sqrt();
    let mut gaps = Vec::new();
    let mut dists = Vec::new();
    for g in iterates {
        let (gap, a) = optimality_gap(obs, g_hat, g)?;
        if a.dist_f <= floor || gap <= 0.0 {
            break;
        }
        gaps.push(gap);
        dists.push(a.dist_f);
    }
    let m = gaps.len();
    if m < 6 {
        return Ok(None);
    }
    let (lo, hi) = (m / 3, (2 * m) / 3);
    if hi <= lo + 1 {
        return Ok(None);
    }
    let steps = (hi - 1 - lo) as f64;
    let lambda_hat = (gaps[hi - 1] / gaps[lo]).powf(1.0 / steps);
    let distance_ratio = (dists[hi - 1] / dists[lo]).powf(1.0 / steps);
    let xs: Vec<f64> = (lo..hi).map(|k| k as f64).collect();
    let ys: Vec<f64> = (lo..hi).map(|k| gaps[k].ln()).collect();
    let r_squared = r_squared(&xs, &ys);
    let max_relative_increase = gaps
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(RateFit { lambda_hat, r_squared, distance_ratio, window: (lo, hi), max_relative_increase, usable: m }))
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

pub const MIN_RATE_ITERATIONS: usize = 20;

/// Q-linear decay of the optimality gap and R-linear decay of the distance.
pub fn check_linear_rate(obs: &Observation, g_hat: &RotationStack, iterates: &[RotationStack]) -> Vec<CheckEntry> {
    let names = ["q-linear-rate", "log-gap-linearity", "gap-monotone", "r-linear-distance"];
    let inapplicable = |why: String| -> Vec<CheckEntry> {
        names.iter().map(|c| CheckEntry::inapplicable(c, anchor::LINEAR_RATE, why.clone())).collect()
    };
    if iterates.len() < MIN_RATE_ITERATIONS + 1 {
        return inapplicable(format!("only {} iterations", iterates.len().saturating_sub(1)));
    }
    let fit = match fit_linear_rate(obs, g_hat, iterates) {
        Ok(Some(f)) => f,
        Ok(None) => return inapplicable("too few iterations above the round-off floor".into()),
        Err(e) => return inapplicable(e.to_string()),
    };
    let mut gate = not_admissible(obs, Guarantee::LocalConcavity);
    if gate.is_none() {
        if let Some(outside) = iterates.iter().position(|g| region_gate(obs, g_hat, g).is_some()) {
            gate = Some(format!("iterate {outside} outside the region"));
        }
    }
    let window = format!("window {:?} of {} usable iterations", fit.window, fit.usable);
    let entries = vec![
        CheckEntry::at_most(names[0], anchor::LINEAR_RATE, fit.lambda_hat, 1.0 - 1e-3, 0.0).with_note(window),
        CheckEntry::at_least(names[1], anchor::LINEAR_RATE, fit.r_squared, 0.95, 0.0),
        CheckEntry::at_most(names[2], anchor::LINEAR_RATE, fit.max_relative_increase, 0.0, 1.0),
        CheckEntry::at_most(names[3], anchor::LINEAR_RATE, fit.distance_ratio, 1.0 - 1e-3, 0.0),
    ];
    match gate {
        Some(why) => entries.into_iter().map(|e| e.demote(why.clone())).collect(),
        None => entries,
    }
}

/// Skew coordinates `E*` with `G*_i = G_i exp(E*_i) Q*` where `Q*` aligns
/// `G` onto `G*`.
pub fn relative_logs(g: &RotationStack, truth: &RotationStack) -> Result<(SkewStack, Mat)> {
    let a = align_onto(g.as_mat(), truth.as_mat())?;
    let d = g.d();
    let blocks = (0..g.n())
        .map(|i| skew_log(&(g.block(i).transpose() * truth.block(i) * a.q.transpose())))
        .collect::<Result<Vec<_>>>()?;
    let _ = d;
    Ok((SkewStack::from_blocks(&blocks), a.q))
}

/// One gradient step with `t <= 1/(2n)` from a point in the ball around
/// `G*` stays in the ball (three dimensions).
pub fn check_stay_in_ball(obs: &Observation, g: &RotationStack, t: f64) -> Vec<CheckEntry> {
    let names = ["stay-in-ball/dist-f", "stay-in-ball/dist-inf"];
    let inapplicable = |why: String| -> Vec<CheckEntry> {
        names.iter().map(|c| CheckEntry::inapplicable(c, anchor::STAY_IN_BALL, why.clone())).collect()
    };
    if let Some(why) = not_admissible(obs, Guarantee::StayInBall) {
        return inapplicable(why);
    }
    let (stats, _, truth) = obs.require_stats().expect("admissible implies known truth");
    let nf = obs.n as f64;
    let radius = ball_radius(nf, stats.op_norm_delta);
    let (e_star, _) = match relative_logs(g, truth) {
        Ok(v) => v,
        Err(e) => return inapplicable(format!("relative logarithm undefined: {e}")),
    };
    if e_star.norm() > radius || e_star.inf_norm() > 0.1 || t > 1.0 / (2.0 * nf) {
        return inapplicable(format!(
            "start outside ball: |E*|_F {:.3e} (max {radius:.3e}), |E*|_inf {:.3e} (max 0.1), t {t:.3e}",
            e_star.norm(),
            e_star.inf_norm()
        ));
    }
    let grad = grad_from_cg(&(&obs.c * g.as_mat()), g);
    let next = exp_map_stack(g, &grad, t);
    match align_onto(next.as_mat(), truth.as_mat()) {
        Ok(a) => vec![
            CheckEntry::at_most(names[0], anchor::STAY_IN_BALL, a.dist_f, radius, radius),
            CheckEntry::at_most(names[1], anchor::STAY_IN_BALL, a.dist_inf, 0.1, 0.1),
        ],
        Err(e) => inapplicable(e.to_string()),
    }
}

pub fn ball_radius(n: f64, op_norm_delta: f64) -> f64 {
    let inner = if op_norm_delta > 0.0 { n.sqrt().min(n / op_norm_delta) } else { n.sqrt() };
    inner / 200.0
}

/// Applies the one-step check along a whole run and also verifies that the
/// ball hypotheses on `E*` keep holding at every iterate.
pub fn check_stay_in_ball_run(obs: &Observation, iterates: &[RotationStack], stepsizes: &[f64]) -> Vec<CheckEntry> {
    if let Some(why) = not_admissible(obs, Guarantee::StayInBall) {
        return vec![
            CheckEntry::inapplicable("stay-in-ball/steps", anchor::STAY_IN_BALL, why.clone()),
            CheckEntry::inapplicable("stay-in-ball/membership", anchor::STAY_IN_BALL, why),
        ];
    }
    let (stats, _, truth) = obs.require_stats().expect("admissible implies known truth");
    let radius = ball_radius(obs.n as f64, stats.op_norm_delta);
    let mut steps = Vec::new();
    let mut membership = Vec::new();
    for (k, g) in iterates.iter().enumerate() {
        match relative_logs(g, truth) {
            Ok((e, _)) => {
                // normalized so the bound is 1 for both radii
                let worst = (e.norm() / radius).max(e.inf_norm() / 0.1);
                membership.push(CheckEntry::at_most("membership", anchor::STAY_IN_BALL, worst, 1.0, 1.0));
            }
            Err(err) => membership.push(CheckEntry::at_most("membership", anchor::STAY_IN_BALL, f64::NAN, 1.0, 1.0).with_note(err.to_string())),
        }
        if let Some(&t) = stepsizes.get(k) {
            if k + 1 < iterates.len() {
                steps.extend(check_stay_in_ball(obs, g, t));
            }
        }
    }
    vec![
        worst_of(steps, "stay-in-ball/steps", anchor::STAY_IN_BALL),
        worst_of(membership, "stay-in-ball/membership", anchor::STAY_IN_BALL),
    ]
}

/// Error of the spectral estimator and of its projection onto the group.
pub fn check_spectral_bounds(obs: &Observation, init: &SpectralInit) -> Vec<CheckEntry> {
    let names = ["spectral/dist-f", "spectral/dist-inf"];
    let (stats, _, truth) = match obs.require_stats() {
        Ok(v) => v,
        Err(e) => {
            return names.iter().map(|c| CheckEntry::inapplicable(c, anchor::SPECTRAL, e.to_string())).collect()
        }
    };
    let nf = obs.n as f64;
    let sd = (obs.d as f64).sqrt();
    let op = stats.op_norm_delta;
    let entries = match align_onto(init.g0.as_mat(), truth.as_mat()) {
        Ok(a) => {
            let rhs_f = 8.0 * sd * op / nf.sqrt();
            let rhs_inf = 16.0 * stats.delta_gstar_inf / nf + 8.0 * sd * op / nf;
            vec![
                CheckEntry::at_most(names[0], anchor::SPECTRAL, a.dist_f, rhs_f, nf.sqrt()),
                CheckEntry::at_most(names[1], anchor::SPECTRAL, a.dist_inf, rhs_inf, 1.0),
            ]
        }
        Err(e) => names.iter().map(|c| CheckEntry::inapplicable(c, anchor::SPECTRAL, e.to_string())).collect(),
    };
    match not_admissible(obs, Guarantee::SpectralInit) {
        Some(why) => entries.into_iter().map(|e| e.demote(why.clone())).collect(),
        None => entries,
    }
}

/// Rotation aligning two stacks that are both close to a common `g`:
/// `|Q - I|_F <= 2 min(d1, d2) / (n - 2 max(d1^2, d2^2)) d_F(H1, H2)
///            <= 4 min(e1, e2) / sqrt(n) d_F(H1, H2)`.
pub fn check_alignment_rotation(g: &Mat, h1: &Mat, h2: &Mat) -> Vec<CheckEntry> {
    let names = ["alignment/bound", "alignment/relaxed"];
    let inapplicable = |why: String| -> Vec<CheckEntry> {
        names.iter().map(|c| CheckEntry::inapplicable(c, anchor::ALIGNMENT, why.clone())).collect()
    };
    let d = g.ncols();
    let nf = (g.nrows() / d) as f64;
    for (name, m) in [("G", g), ("H1", h1), ("H2", h2)] {
        let resid = (m.transpose() * m - Mat::identity(d, d) * nf).norm();
        if resid > 1e-8 * nf {
            return inapplicable(format!("{name}^T {name} differs from nI by {resid:.3e}"));
        }
    }
    let d1 = (h1 - g).norm();
    let d2 = (h2 - g).norm();
    for (name, h, dist) in [("H1", h1, d1), ("H2", h2, d2)] {
        let best = crate::quotient::dist_f_nuclear(h, g);
        match procrustes_align(h, g) {
            Ok(a) if dist <= a.dist_f + 1e-9 * nf.sqrt() => {}
            _ => return inapplicable(format!("{name} is not aligned with G (|H-G| = {dist:.3e}, class distance {best:.3e})")),
        }
    }
    let (e1, e2) = (d1 / nf.sqrt(), d2 / nf.sqrt());
    if e1 >= 0.5 || e2 >= 0.5 {
        return inapplicable(format!("closeness {e1:.3e}, {e2:.3e} not below 1/2"));
    }
    let a = match procrustes_align(h2, h1) {
        Ok(a) => a,
        Err(e) => return inapplicable(e.to_string()),
    };
    let lhs = (&a.q - Mat::identity(d, d)).norm();
    let rhs = 2.0 * d1.min(d2) / (nf - 2.0 * (d1 * d1).max(d2 * d2)) * a.dist_f;
    let relaxed = 4.0 * e1.min(e2) / nf.sqrt() * a.dist_f;
    vec![
        // |Q - I| carries round-off of order 1e-15 even when the bound is 0
        CheckEntry::at_most(names[0], anchor::ALIGNMENT, lhs, rhs, rhs.max(1e-6)),
        CheckEntry::at_most(names[1], anchor::ALIGNMENT, rhs, relaxed, relaxed.max(1e-12)),
    ]
}

/// Nuclear-norm oracle for the class distance between stacks with
/// `X^T X = Y^T Y = n I`: `sqrt(2(nd - |Y^T X|_*))`.
pub fn class_distance_nuclear(x: &Mat, y: &Mat) -> f64 {
    let d = x.ncols() as f64;
    let n = x.nrows() as f64 / d;
    (2.0 * (n * d - nuclear_norm(&(y.transpose() * x)))).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Group;

    #[test]
    fn horizontal_basis_is_orthonormal_and_horizontal() {
        let basis = horizontal_basis(5, 3);
        assert_eq!(basis.len(), 4 * 3);
        for (a, ba) in basis.iter().enumerate() {
            assert!(ba.block_sum().norm() < 1e-15);
            for (b, bb) in basis.iter().enumerate() {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ba.dot(bb) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn r_squared_of_exact_line_is_one() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 0.5, 0.0, -0.5];
        assert!((r_squared(&xs, &ys) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_concavity_spectrum_is_flat() {
        // every horizontal direction has -<Hess H, H> = 2n |H|^2 at the truth
        let obs = crate::problem::gaussian_instance(6, 3, 0.0, 5).unwrap();
        let truth = obs.truth.clone().unwrap();
        let (lo, hi, exhaustive) = concavity_spectrum(&obs.c, &truth, CurvatureProbe::default()).unwrap();
        assert!(exhaustive);
        assert!((lo - 12.0).abs() < 1e-10 && (hi - 12.0).abs() < 1e-10, "{lo} {hi}");
    }

    #[test]
    fn gap_operator_annihilates_fixed_point() {
        let obs = crate::problem::gaussian_instance(8, 2, 0.0, 1).unwrap();
        let truth = obs.truth.clone().unwrap();
        let p = gap_operator_blocks(&obs.c, &truth);
        let mut dg = -(&obs.c * truth.as_mat());
        for i in 0..8 {
            let add = block(&p, i, 2) * truth.block(i);
            let mut rows = dg.rows_mut(2 * i, 2);
            rows += &add;
        }
        assert!(dg.norm() < 1e-12);
        let _ = Group::SO;
    }
}
