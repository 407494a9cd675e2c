//! Numerical certificates: every guarantee is evaluated as an inequality
//! `lhs <= rhs` (or `>=`) with its margin, and marked inapplicable when the
//! instance does not satisfy its hypotheses.

pub mod checks;
pub mod geometry;
mod report;

pub use checks::*;
pub use geometry::*;
pub use report::*;

use crate::error::Result;
use crate::estimators::{reference_optimum, spectral_init, Estimate, DEFAULT_ALPHA};
use crate::manifold::RotationStack;
use crate::problem::Observation;

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub alpha: f64,
    pub probe: CurvatureProbe,
    pub radius_samples: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { alpha: DEFAULT_ALPHA, probe: CurvatureProbe::default(), radius_samples: 200 }
    }
}

/// Runs every applicable check for an estimate on an instance. When the
/// estimate carries its iterates, the run-level checks (ascent, rate,
/// error bound along the path, staying in the ball) are included.
pub fn certify(obs: &Observation, estimate: &Estimate, opts: CertifyOptions) -> Result<CertReport> {
    let mut report = CertReport::new(InstanceMeta::of(obs));
    let group = estimate.g_hat.group();
    let g_ref = reference_optimum(obs, group)?;
    let g_est = &estimate.g_hat;

    report.extend(check_l2_error(obs, g_ref.as_mat()));
    report.extend([check_linf_error(obs, g_ref.as_mat(), "reference")]);
    report.extend([check_linf_error(obs, g_est.as_mat(), "estimate")]);

    let init = spectral_init(obs, group).ok();
    if let Some(init) = &init {
        report.extend([check_linf_error(obs, &init.phi, "eigenvectors")]);
        report.extend(check_spectral_bounds(obs, init));
    }

    report.extend([check_hessian_pd(obs, &g_ref, &g_ref, opts.probe)]);
    report.extend([check_hessian_pd(obs, &g_ref, g_est, opts.probe)]);

    let single = [g_est.clone()];
    let points: &[RotationStack] = estimate.iterates.as_deref().unwrap_or(&single);
    report.extend([check_error_bound(obs, &g_ref, points)]);

    if let Some(iterates) = &estimate.iterates {
        report.extend(check_ascent_and_gap(obs, &g_ref, iterates, &estimate.trace, opts.alpha));
        report.extend(check_linear_rate(obs, &g_ref, iterates));
        let steps: Vec<f64> = estimate.trace.records.iter().filter_map(|r| r.stepsize).collect();
        report.extend(check_stay_in_ball_run(obs, iterates, &steps));
    }

    if let (Some(truth), Some(init)) = (&obs.truth, &init) {
        report.extend(check_distance_chain(g_est, truth));
        // the scaled eigenvectors and the estimate, both aligned onto the truth
        if let (Ok(a1), Ok(a2)) =
            (align_onto(&init.phi, truth.as_mat()), align_onto(g_est.as_mat(), truth.as_mat()))
        {
            let h1 = &init.phi * &a1.q;
            let h2 = g_est.as_mat() * &a2.q;
            report.extend(check_alignment_rotation(truth.as_mat(), &h1, &h2));
        }
    }
    report.extend(check_radius(opts.radius_samples, obs.seed));
    Ok(report)
}
