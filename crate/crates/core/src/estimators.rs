//! Estimators for `max tr(G^T C G)` over `O(d)^n` or `SO(d)^n`: spectral
//! initialization, Riemannian gradient ascent on the quotient, and the
//! generalized power method used to polish reference solutions.

use serde::Serialize;

use crate::error::{Result, SyncError};
use crate::linalg::{block, block_inf_norm, frob_dot, sorted_sym_eigen, Mat};
use crate::manifold::{exp_map_with_step, Group, RotationStack};
use crate::problem::Observation;
use crate::quotient::{grad_from_cg, procrustes_align};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const REFERENCE_TOL: f64 = 1e-12;
pub const REFERENCE_POLISH_STEPS: usize = 50;
/// Blocks are re-projected onto the group after this many exponential steps.
pub const REPROJECT_EVERY: usize = 50;
/// `|Delta G^k|_inf` is recomputed exactly this often in safe mode.
pub const REFRESH_EVERY: usize = 10;
/// Relative eigengap below which spectral initialization is refused.
pub const EIGENGAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SpectralInit {
    pub g0: RotationStack,
    /// Top-`d` eigenvectors scaled so that `Phi^T Phi = n I`.
    pub phi: Mat,
    pub eigengap: f64,
}

/// Top-`d` eigenvectors of `C`, scaled by `sqrt(n)`, then each block
/// projected onto the group.
pub fn spectral_init(obs: &Observation, group: Group) -> Result<SpectralInit> {
    let (n, d) = (obs.n, obs.d);
    let (vals, vecs) = sorted_sym_eigen(&obs.c);
    let eigengap = if vals.len() > d { vals[d - 1] - vals[d] } else { f64::INFINITY };
    if !(eigengap >= EIGENGAP_TOL * n as f64) {
        return Err(SyncError::EigengapTooSmall { gap: eigengap });
    }
    let mut phi = vecs.columns(0, d).into_owned() * (n as f64).sqrt();
    if group == Group::SO {
        // eigenvectors are defined up to O(d); pick the reflection class that
        // puts most blocks in the rotation component
        let dets: f64 = (0..n).map(|i| block(&phi, i, d).determinant().signum()).sum();
        if dets < 0.0 {
            let mut col = phi.column_mut(d - 1);
            col *= -1.0;
        }
    }
    let g0 = RotationStack::project_blocks(&phi, d, group)?;
    Ok(SpectralInit { g0, phi, eigengap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepsizePolicy {
    Fixed { t: f64 },
    /// `t_k = (1 - alpha) / (n(d+1) + |Delta| + sqrt(d) |Delta G^k|_inf)`,
    /// never below `t_fixed / 10`. Without noise statistics it falls back to
    /// `1 / (4nd)`.
    Safe { alpha: f64, t_fixed: f64 },
}

impl StepsizePolicy {
    pub fn conservative(n: usize, d: usize) -> f64 {
        1.0 / (4.0 * n as f64 * d as f64)
    }

    pub fn safe_default(n: usize, d: usize) -> Self {
        StepsizePolicy::Safe { alpha: DEFAULT_ALPHA, t_fixed: Self::conservative(n, d) }
    }
}

pub fn safe_rule(n: usize, d: usize, alpha: f64, op_norm_delta: f64, delta_g_inf: f64) -> f64 {
    let nf = n as f64;
    (1.0 - alpha) / (nf * (d as f64 + 1.0) + op_norm_delta + (d as f64).sqrt() * delta_g_inf)
}

/// Step size admitted by the ascent guarantee at `g`, or `1/(4nd)` when the
/// noise is unknown.
pub fn safe_stepsize(obs: &Observation, g: &RotationStack, alpha: f64) -> f64 {
    match obs.require_stats() {
        Ok((stats, delta, _)) => {
            let dg = block_inf_norm(&(delta * g.as_mat()), obs.d);
            safe_rule(obs.n, obs.d, alpha, stats.op_norm_delta, dg)
        }
        Err(_) => StepsizePolicy::conservative(obs.n, obs.d),
    }
}

/// Upper bound on `|Delta G|_inf` refreshed every few iterations; between
/// refreshes it adds `|Delta| |G - G_ref|_F`, which dominates the change.
struct DeltaGBound<'a> {
    delta: &'a Mat,
    op_norm: f64,
    d: usize,
    anchor: Mat,
    anchor_value: f64,
}

impl<'a> DeltaGBound<'a> {
    fn new(delta: &'a Mat, op_norm: f64, g: &RotationStack) -> Self {
        let mut b = DeltaGBound { delta, op_norm, d: g.d(), anchor: g.as_mat().clone(), anchor_value: 0.0 };
        b.refresh(g);
        b
    }

    fn refresh(&mut self, g: &RotationStack) {
        self.anchor = g.as_mat().clone();
        self.anchor_value = block_inf_norm(&(self.delta * g.as_mat()), self.d);
    }

    fn bound(&self, g: &RotationStack) -> f64 {
        self.anchor_value + self.op_norm * (g.as_mat() - &self.anchor).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Spectral,
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// Step taken from this iterate (also reported at the final iterate).
    pub stepsize: Option<f64>,
    /// `f(G^{k+1}) - f(G^k)` computed from the step itself; `None` at the
    /// last iterate.
    pub ascent: Option<f64>,
    pub stepsize_clamped: bool,
    pub dist_f_ref: Option<f64>,
    pub dist_inf_ref: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveTrace {
    pub records: Vec<IterRecord>,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub g_hat: RotationStack,
    pub trace: SolveTrace,
    pub init_kind: InitKind,
    pub status: SolveStatus,
    /// Every iterate, kept only when requested.
    pub iterates: Option<Vec<RotationStack>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub keep_iterates: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: DEFAULT_TOL, max_iter: 10_000, keep_iterates: false }
    }
}

fn ref_distances(g: &RotationStack, truth: Option<&RotationStack>) -> (Option<f64>, Option<f64>) {
    match truth.and_then(|t| procrustes_align(g.as_mat(), t.as_mat()).ok()) {
        Some(a) => (Some(a.dist_f), Some(a.dist_inf)),
        None => (None, None),
    }
}

/// Riemannian gradient ascent `G^{k+1} = Exp_{G^k}(t_k grad f(G^k))`, stopping
/// once `|grad f|_F <= tol * n`.
pub fn rgm_solve(
    obs: &Observation,
    g0: &RotationStack,
    policy: StepsizePolicy,
    opts: SolveOptions,
    init_kind: InitKind,
) -> Result<Estimate> {
    let (n, d) = (obs.n, obs.d);
    if g0.n() != n || g0.d() != d {
        return Err(SyncError::Dimension("initial stack does not match observation".into()));
    }
    let truth = obs.truth.as_ref();
    let safe_bound = match (policy, obs.require_stats()) {
        (StepsizePolicy::Safe { .. }, Ok((stats, delta, _))) => {
            Some(DeltaGBound::new(delta, stats.op_norm_delta, g0))
        }
        _ => None,
    };
    let mut safe_bound = safe_bound;
    let op_norm = obs.stats.map(|s| s.op_norm_delta).unwrap_or(0.0);

    let mut g = g0.clone();
    let mut records = Vec::new();
    let mut iterates = opts.keep_iterates.then(Vec::new);
    let mut k = 0;
    loop {
        let cg = &obs.c * g.as_mat();
        let f = frob_dot(g.as_mat(), &cg);
        if !f.is_finite() {
            return Err(SyncError::NonFinite(k));
        }
        let grad = grad_from_cg(&cg, &g);
        let grad_norm = grad.norm();

        if let Some(b) = safe_bound.as_mut() {
            if k % REFRESH_EVERY == 0 {
                b.refresh(&g);
            }
        }
        let (t, clamped) = match policy {
            StepsizePolicy::Fixed { t } => (t, false),
            StepsizePolicy::Safe { alpha, t_fixed } => {
                let rule = match &safe_bound {
                    Some(b) => safe_rule(n, d, alpha, op_norm, b.bound(&g)),
                    None => StepsizePolicy::conservative(n, d),
                };
                let floor = t_fixed / 10.0;
                if rule < floor {
                    (floor, true)
                } else {
                    (rule, false)
                }
            }
        };
        let (dist_f_ref, dist_inf_ref) = ref_distances(&g, truth);
        if let Some(list) = iterates.as_mut() {
            list.push(g.clone());
        }

        let done = grad_norm <= opts.tol * n as f64;
        if done || k >= opts.max_iter {
            records.push(IterRecord {
                iter: k,
                f,
                grad_norm,
                stepsize: Some(t),
                ascent: None,
                stepsize_clamped: clamped,
                dist_f_ref,
                dist_inf_ref,
            });
            let status = if done { SolveStatus::Converged } else { SolveStatus::MaxIter };
            return Ok(Estimate { g_hat: g, trace: SolveTrace { records }, init_kind, status, iterates });
        }

        let (mut next, step) = exp_map_with_step(&g, &grad, t);
        // f(G + S) - f(G) = <S, C (2G + S)>
        let ascent = frob_dot(&step, &(&cg * 2.0 + &obs.c * &step));
        records.push(IterRecord {
            iter: k,
            f,
            grad_norm,
            stepsize: Some(t),
            ascent: Some(ascent),
            stepsize_clamped: clamped,
            dist_f_ref,
            dist_inf_ref,
        });
        k += 1;
        if k % REPROJECT_EVERY == 0 {
            next.reproject()?;
        }
        g = next;
    }
}

/// Generalized power method `G <- Proj(C G)`, with the same stopping rule as
/// [`rgm_solve`].
pub fn gpm_solve(obs: &Observation, g0: &RotationStack, opts: SolveOptions) -> Result<Estimate> {
    let (n, d) = (obs.n, obs.d);
    let truth = obs.truth.as_ref();
    let group = g0.group();
    let mut g = g0.clone();
    let mut records = Vec::new();
    let mut iterates = opts.keep_iterates.then(Vec::new);
    let mut k = 0;
    loop {
        let cg = &obs.c * g.as_mat();
        let f = frob_dot(g.as_mat(), &cg);
        if !f.is_finite() {
            return Err(SyncError::NonFinite(k));
        }
        let grad_norm = grad_from_cg(&cg, &g).norm();
        let (dist_f_ref, dist_inf_ref) = ref_distances(&g, truth);
        if let Some(list) = iterates.as_mut() {
            list.push(g.clone());
        }
        let done = grad_norm <= opts.tol * n as f64;
        let stop = done || k >= opts.max_iter;
        let next = if stop { None } else { Some(RotationStack::project_blocks(&cg, d, group)?) };
        let ascent = next
            .as_ref()
            .map(|nx| crate::linalg::quad_form_difference(&obs.c, nx.as_mat(), g.as_mat()));
        records.push(IterRecord {
            iter: k,
            f,
            grad_norm,
            stepsize: None,
            ascent,
            stepsize_clamped: false,
            dist_f_ref,
            dist_inf_ref,
        });
        match next {
            None => {
                let status = if done { SolveStatus::Converged } else { SolveStatus::MaxIter };
                return Ok(Estimate {
                    g_hat: g,
                    trace: SolveTrace { records },
                    init_kind: InitKind::Given,
                    status,
                    iterates,
                });
            }
            Some(nx) => g = nx,
        }
        k += 1;
    }
}

/// `|Proj(C G) - G|_F`, zero exactly at fixed points of the power method.
pub fn gpm_residual(obs: &Observation, g: &RotationStack) -> Result<f64> {
    let cg = &obs.c * g.as_mat();
    let next = RotationStack::project_blocks(&cg, obs.d, g.group())?;
    Ok((next.as_mat() - g.as_mat()).norm())
}

/// Spectral initialization followed by gradient ascent with the safe rule.
pub fn spectral_rgm(obs: &Observation, group: Group, opts: SolveOptions) -> Result<Estimate> {
    let init = spectral_init(obs, group)?;
    rgm_solve(obs, &init.g0, StepsizePolicy::safe_default(obs.n, obs.d), opts, InitKind::Spectral)
}

/// Reference maximizer: spectral start, gradient ascent to a tight
/// tolerance, then a fixed number of power-method steps.
pub fn reference_optimum(obs: &Observation, group: Group) -> Result<RotationStack> {
    let opts = SolveOptions { tol: REFERENCE_TOL, max_iter: 100_000, keep_iterates: false };
    let est = spectral_rgm(obs, group, opts)?;
    let mut g = est.g_hat;
    for _ in 0..REFERENCE_POLISH_STEPS {
        let cg = &obs.c * g.as_mat();
        g = RotationStack::project_blocks(&cg, obs.d, group)?;
    }
    Ok(g)
}
