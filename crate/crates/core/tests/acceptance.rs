//! Acceptance suite: one PASS/FAIL line per criterion. Criteria run in
//! parallel; the process exits non-zero if any fails.

use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use rotsync_core::diagnostics::{
    align_onto, check_alignment_rotation, check_ascent_and_gap, check_error_bound, check_hessian_pd,
    check_l2_error, check_linf_error, check_radius, check_stay_in_ball_run, fit_linear_rate, focp_example,
    CheckEntry, CurvatureProbe, Status,
};
use rotsync_core::estimators::{
    reference_optimum, rgm_solve, spectral_init, spectral_rgm, DEFAULT_ALPHA,
};
use rotsync_core::manifold::{exp_map_stack, skew_exp};
use rotsync_core::problem::{admissibility, gaussian_instance, random_rotation_stack};
use rotsync_core::quotient::{hess_quadratic, hess_vec, horizontal_project, objective_difference, riemannian_grad};
use rotsync_core::rng::{stream, Domain};
use rotsync_core::{
    Group, Guarantee, InitKind, Mat, Observation, RegionSpec, RotationStack, SkewBlock, SkewStack, SolveOptions,
    SolveStatus, StepsizePolicy,
};

const SIZES: [usize; 4] = [10, 20, 50, 100];
const DIMS: [usize; 2] = [2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(failures: &[String], summary: String) -> Self {
        if failures.is_empty() {
            Outcome { pass: true, detail: summary }
        } else {
            let shown: Vec<&str> = failures.iter().take(3).map(String::as_str).collect();
            Outcome {
                pass: false,
                detail: format!("{summary}; {} failure(s): {}", failures.len(), shown.join(" | ")),
            }
        }
    }
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Noise level that keeps the local-concavity hypotheses comfortably satisfied.
fn in_regime_sigma(n: usize, d: usize) -> f64 {
    0.5 * (n as f64).powf(0.25) / (40.0 * d as f64)
}

fn require(entry: &CheckEntry, ctx: &str, failures: &mut Vec<String>) {
    if entry.status != Status::Pass {
        failures.push(format!(
            "{ctx} {} {:?} lhs={:.3e} rhs={:.3e} {}",
            entry.check,
            entry.status,
            entry.lhs,
            entry.rhs,
            entry.note.clone().unwrap_or_default()
        ));
    }
}

fn exact_recovery() -> Outcome {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for &d in &DIMS {
        for &n in &SIZES {
            let obs = gaussian_instance(n, d, 0.0, 100 + n as u64).unwrap();
            let t0 = Instant::now();
            let est = spectral_rgm(&obs, Group::SO, SolveOptions::default()).unwrap();
            let elapsed = t0.elapsed();
            let dist = align_onto(est.g_hat.as_mat(), obs.truth.as_ref().unwrap().as_mat()).unwrap().dist_f;
            worst = worst.max(dist);
            slowest = slowest.max(elapsed);
            if dist > 1e-8 || elapsed > Duration::from_secs(5) {
                failures.push(format!("n={n} d={d} dist_f={dist:.3e} time={elapsed:?}"));
            }
        }
    }
    Outcome::new(&failures, format!("max dist_f {worst:.2e}, slowest solve {slowest:.2?}"))
}

fn random_tangent(rng: &mut impl Rng, n: usize, d: usize) -> SkewStack {
    SkewStack::from_blocks_skew_part(&gaussian(rng, n * d, d), d)
}

fn gradient_fd() -> Outcome {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let h = 1e-5;
    for seed in 0..100u64 {
        let n = [6, 10, 20][seed as usize % 3];
        let d = DIMS[(seed / 3) as usize % 2];
        let obs = gaussian_instance(n, d, 0.3, seed).unwrap();
        let g = random_rotation_stack(n, d, seed + 10_000).unwrap();
        let grad = riemannian_grad(&obs.c, &g);
        for j in 0..20 {
            let mut rng = stream(seed, Domain::Probe, j, 11);
            let xi = random_tangent(&mut rng, n, d);
            let plus = exp_map_stack(&g, &xi, h);
            let minus = exp_map_stack(&g, &xi, -h);
            let fd = objective_difference(&obs.c, plus.as_mat(), minus.as_mat()) / (2.0 * h);
            let exact = grad.dot(&xi);
            let rel = (fd - exact).abs() / exact.abs();
            worst = worst.max(rel);
            if !(rel <= 1e-6) {
                failures.push(format!("seed={seed} tangent={j} fd={fd:.9e} grad={exact:.9e} rel={rel:.2e}"));
            }
        }
    }
    Outcome::new(&failures, format!("2000 directional derivatives, max relative error {worst:.2e}"))
}

fn hessian_fd() -> Outcome {
    let mut failures = Vec::new();
    let (mut worst_fd, mut worst_quad) = (0.0f64, 0.0f64);
    let h = 1e-3;
    for seed in 0..100u64 {
        let n = [6, 10, 20][seed as usize % 3];
        let d = DIMS[(seed / 3) as usize % 2];
        let obs = gaussian_instance(n, d, 0.3, seed).unwrap();
        // alternate random points and points near the truth
        let g = if seed % 2 == 0 {
            random_rotation_stack(n, d, seed + 20_000).unwrap()
        } else {
            let mut rng = stream(seed, Domain::Probe, 0, 12);
            exp_map_stack(obs.truth.as_ref().unwrap(), &random_tangent(&mut rng, n, d), 0.05)
        };
        let mut rng = stream(seed, Domain::Probe, 1, 12);
        let hz = horizontal_project(&g, &random_tangent(&mut rng, n, d)).unwrap();
        let plus = exp_map_stack(&g, &hz, h);
        let minus = exp_map_stack(&g, &hz, -h);
        let second = (objective_difference(&obs.c, plus.as_mat(), g.as_mat())
            + objective_difference(&obs.c, minus.as_mat(), g.as_mat()))
            / (h * h);
        let form = hess_vec(&obs.c, &g, &hz).dot(&hz);
        let quad = -2.0 * hess_quadratic(&obs.c, &g, &hz);
        let rel_fd = (second - form).abs() / form.abs();
        let rel_quad = (quad - form).abs() / form.abs();
        worst_fd = worst_fd.max(rel_fd);
        worst_quad = worst_quad.max(rel_quad);
        if !(rel_fd <= 1e-4) || !(rel_quad <= 1e-8) {
            failures.push(format!("seed={seed} <Hess H,H>={form:.9e} fd={second:.9e} quad={quad:.9e}"));
        }
    }
    Outcome::new(
        &failures,
        format!("100 seeds, max relative error vs second difference {worst_fd:.2e}, vs quadratic form {worst_quad:.2e}"),
    )
}

fn exp_inequalities() -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for trial in 0..1000usize {
        let mut rng = stream(4, Domain::Probe, trial, 13);
        let n = rng.gen_range(2..=8);
        let d = [2, 3, 5][trial % 3];
        let g = random_rotation_stack(n, d, trial as u64 + 40_000).unwrap();
        let xi = random_tangent(&mut rng, n, d);
        let len = 10f64.powf(rng.gen_range(-3.0..1.0));
        let xi = xi.scaled(len / xi.norm());
        let moved = exp_map_stack(&g, &xi, 1.0);
        let norm = xi.norm();
        let step = (moved.as_mat() - g.as_mat()).norm();
        let retraction = (moved.as_mat() - g.as_mat() - xi.embed(&g)).norm();
        let e1 = xi.block(0);
        let e2 = random_tangent(&mut rng, 1, d).scaled(rng.gen_range(0.0..3.0)).block(0);
        let lip_lhs = (skew_exp(&SkewBlock::from_skew_part(&e2)) - skew_exp(&SkewBlock::from_skew_part(&e1))).norm();
        let lip_rhs = (&e2 - &e1).norm();
        let entries = [
            CheckEntry::at_most("exp-step", "exp", step, norm, norm),
            CheckEntry::at_most("exp-second-order", "exp", retraction, 0.5 * norm * norm, 0.5 * norm * norm),
            CheckEntry::at_most("exp-lipschitz", "exp", lip_lhs, lip_rhs, lip_rhs),
        ];
        for e in &entries {
            checked += 1;
            require(e, &format!("trial={trial} n={n} d={d}"), &mut failures);
        }
    }
    Outcome::new(&failures, format!("{checked} inequalities over 1000 random (G, xi)"))
}

fn l2_instances() -> Vec<Observation> {
    let mut out = Vec::new();
    for &n in &[20usize, 50, 100] {
        let d = 3;
        let sigma = 0.3 * (n as f64).sqrt() / (12.0 * d as f64);
        for seed in 0..20u64 {
            out.push(gaussian_instance(n, d, sigma, 500 + seed).unwrap());
        }
    }
    out
}

fn l2_bound(instances: &[(Observation, RotationStack)]) -> Outcome {
    let mut failures = Vec::new();
    let mut tightest = f64::INFINITY;
    for (obs, g_ref) in instances {
        let ctx = format!("n={} seed={}", obs.n, obs.seed);
        let stats = obs.stats.unwrap();
        let bound = obs.n as f64 / (6.0 * (obs.d as f64).sqrt());
        if stats.op_norm_delta > bound {
            failures.push(format!("{ctx} |Delta|={:.3e} above {bound:.3e}", stats.op_norm_delta));
            continue;
        }
        for e in check_l2_error(obs, g_ref.as_mat()) {
            if e.check == "l2-error/dist-f" {
                tightest = tightest.min(e.rhs / e.lhs);
            }
            require(&e, &ctx, &mut failures);
        }
    }
    Outcome::new(&failures, format!("{} instances, smallest bound/error ratio {tightest:.2}", instances.len()))
}

fn linf_bound(instances: &[(Observation, RotationStack)]) -> Outcome {
    let mut failures = Vec::new();
    let mut tightest = f64::INFINITY;
    for (obs, g_ref) in instances {
        let ctx = format!("n={} seed={}", obs.n, obs.seed);
        if !admissibility(obs, Guarantee::LinfError).unwrap().holds() {
            failures.push(format!("{ctx} hypothesis fails"));
            continue;
        }
        let e = check_linf_error(obs, g_ref.as_mat(), "reference");
        tightest = tightest.min(e.rhs / e.lhs);
        require(&e, &ctx, &mut failures);

        // the maximizer over O(d)^n, up to one global reflection, lies in SO(d)^n
        let g_o = reference_optimum(obs, Group::O).unwrap();
        require(&check_linf_error(obs, g_o.as_mat(), "orthogonal"), &ctx, &mut failures);
        let dets = g_o.determinants();
        let sign = if dets.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let worst = dets.iter().map(|v| (sign * v - 1.0).abs()).fold(0.0, f64::max);
        if worst > 1e-9 {
            failures.push(format!("{ctx} O(d) maximizer has a block with det {:+.3}", sign * (1.0 + worst)));
        }
        let so_dets = g_ref.determinants();
        if so_dets.iter().any(|v| (v - 1.0).abs() > 1e-9) {
            failures.push(format!("{ctx} SO(d) estimate has a non-rotation block"));
        }
    }
    Outcome::new(
        &failures,
        format!("{} instances, smallest bound/error ratio {tightest:.2}, O(d) maximizers all rotations", instances.len()),
    )
}

struct Run {
    obs: Observation,
    g_ref: RotationStack,
    estimate: rotsync_core::Estimate,
    label: String,
}

/// Gradient-ascent runs with the safe step on in-regime instances, from the
/// spectral start and from a point near the edge of the region.
fn in_regime_runs() -> Vec<Run> {
    let mut runs = Vec::new();
    let opts = SolveOptions { keep_iterates: true, ..SolveOptions::default() };
    for &d in &DIMS {
        for &n in &SIZES {
            for seed in 0..2u64 {
                let obs = gaussian_instance(n, d, in_regime_sigma(n, d), 900 + seed).unwrap();
                let g_ref = reference_optimum(&obs, Group::SO).unwrap();
                let policy = StepsizePolicy::safe_default(n, d);
                let init = spectral_init(&obs, Group::SO).unwrap();
                let est = rgm_solve(&obs, &init.g0, policy, opts, InitKind::Spectral).unwrap();
                runs.push(Run {
                    obs: obs.clone(),
                    g_ref: g_ref.clone(),
                    estimate: est,
                    label: format!("n={n} d={d} seed={} spectral", obs.seed),
                });
                let region = RegionSpec::for_instance(n, obs.stats.unwrap().op_norm_delta);
                let mut rng = stream(obs.seed, Domain::Probe, 0, 14);
                let h = horizontal_project(&g_ref, &random_tangent(&mut rng, n, d)).unwrap();
                let g0 = exp_map_stack(&g_ref, &h, 0.8 * region.rho_f / h.norm());
                let est = rgm_solve(&obs, &g0, policy, opts, InitKind::Given).unwrap();
                runs.push(Run { obs, g_ref, estimate: est, label: format!("n={n} d={d} seed={} perturbed", 900 + seed) });
            }
        }
    }
    runs
}

fn hessian_pd(runs: &[Run]) -> Outcome {
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    let mut seen = 0;
    for run in runs.iter().filter(|r| r.label.ends_with("spectral")) {
        let e = check_hessian_pd(&run.obs, &run.g_ref, &run.g_ref, CurvatureProbe::default());
        worst = worst.min(e.lhs / run.obs.n as f64);
        seen += 1;
        require(&e, &run.label, &mut failures);
    }
    Outcome::new(&failures, format!("{seen} maximizers, smallest curvature / n = {worst:.3}"))
}

fn error_bound(runs: &[Run]) -> Outcome {
    let mut failures = Vec::new();
    let mut points = 0;
    for run in runs {
        let iterates = run.estimate.iterates.as_ref().unwrap();
        let e = check_error_bound(&run.obs, &run.g_ref, iterates);
        points += iterates.len();
        require(&e, &run.label, &mut failures);
    }
    Outcome::new(&failures, format!("{} runs, {points} iterates", runs.len()))
}

fn ascent_and_rate(runs: &[Run]) -> Outcome {
    let mut failures = Vec::new();
    let mut worst_lambda = 0.0f64;
    let mut worst_r2 = 1.0f64;
    let mut converged = 0;
    for run in runs {
        let iterates = run.estimate.iterates.as_ref().unwrap();
        let entries = check_ascent_and_gap(&run.obs, &run.g_ref, iterates, &run.estimate.trace, DEFAULT_ALPHA);
        for e in entries.iter().filter(|e| e.check == "sufficient-ascent" || e.check == "stepsize-admissible") {
            require(e, &run.label, &mut failures);
        }
        if run.estimate.status != SolveStatus::Converged {
            continue;
        }
        converged += 1;
        match fit_linear_rate(&run.obs, &run.g_ref, iterates).unwrap() {
            Some(fit) => {
                worst_lambda = worst_lambda.max(fit.lambda_hat);
                worst_r2 = worst_r2.min(fit.r_squared);
                if !(fit.lambda_hat < 1.0) || !(fit.r_squared >= 0.95) {
                    failures.push(format!("{} lambda={:.4} r2={:.4}", run.label, fit.lambda_hat, fit.r_squared));
                }
            }
            None => failures.push(format!("{} too few usable iterations for a rate fit", run.label)),
        }
    }
    Outcome::new(
        &failures,
        format!("{converged} converged runs, max lambda {worst_lambda:.3}, min R^2 {worst_r2:.4}"),
    )
}

fn stay_in_ball() -> Outcome {
    let mut failures = Vec::new();
    let (n, d) = (20, 3);
    let mut checked = 0;
    for seed in 0..20u64 {
        let obs = gaussian_instance(n, d, 0.002, 1300 + seed).unwrap();
        let ctx = format!("seed={}", obs.seed);
        if !admissibility(&obs, Guarantee::StayInBall).unwrap().holds() {
            failures.push(format!("{ctx} hypotheses fail"));
            continue;
        }
        let opts = SolveOptions { keep_iterates: true, ..SolveOptions::default() };
        let est = spectral_rgm(&obs, Group::SO, opts).unwrap();
        let steps: Vec<f64> = est.trace.records.iter().filter_map(|r| r.stepsize).collect();
        for e in check_stay_in_ball_run(&obs, est.iterates.as_ref().unwrap(), &steps) {
            checked += 1;
            require(&e, &ctx, &mut failures);
        }
    }
    Outcome::new(&failures, format!("20 seeds at n={n}, {checked} run-level checks"))
}

fn appendix() -> Outcome {
    let mut failures = Vec::new();
    let mut applicable = 0;
    for trial in 0..500usize {
        let mut rng = stream(7, Domain::Probe, trial, 15);
        let n = rng.gen_range(3..=30);
        let d = DIMS[trial % 2];
        let g = random_rotation_stack(n, d, trial as u64 + 60_000).unwrap();
        let mut near = || {
            let xi = random_tangent(&mut rng, n, d);
            let len = rng.gen_range(0.01..0.45) * (n as f64).sqrt();
            let y = exp_map_stack(&g, &xi, len / xi.norm());
            let a = align_onto(y.as_mat(), g.as_mat()).unwrap();
            y.as_mat() * &a.q
        };
        let (h1, h2) = (near(), near());
        for e in check_alignment_rotation(g.as_mat(), &h1, &h2) {
            if e.status != Status::Inapplicable {
                applicable += 1;
            }
            require(&e, &format!("triple={trial} n={n} d={d}"), &mut failures);
        }
    }
    for e in check_radius(1000, 8) {
        require(&e, "radius", &mut failures);
    }
    Outcome::new(
        &failures,
        format!("500 triples ({applicable} applicable checks), 1000 log/exp round trips, closed geodesic of length 2 sqrt(2) pi"),
    )
}

fn focp() -> Outcome {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for &n in &SIZES {
        let r = focp_example(n, 77).unwrap();
        if !(r.grad_norm <= 1e-12) || !(r.objective_gap > 0.0) {
            failures.push(format!("n={n} grad={:.3e} gap={:.3e}", r.grad_norm, r.objective_gap));
        }
        notes.push(format!("n={n}: gap {:.6} dist_f {:.6}", r.objective_gap, r.dist_f));
    }
    let expected = 2.0 * SQRT_2;
    Outcome::new(&failures, format!("{} (2 sqrt 2 = {expected:.6})", notes.join(", ")))
}

fn main() {
    let started = Instant::now();
    let names = [
        "exact recovery without noise",
        "gradient matches finite differences",
        "hessian matches finite differences and quadratic form",
        "exponential map inequalities",
        "l2 estimation error bound",
        "linf estimation error bound and rotation tightness",
        "strong concavity at the maximizer",
        "local error bound along iterates",
        "sufficient ascent and linear rate",
        "iterates stay in the ball (d = 3)",
        "alignment rotation bound, log/exp round trip, closed geodesic",
        "first-order critical point that is not a maximizer",
    ];
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let simple: Vec<_> = [
            (exact_recovery as fn() -> Outcome),
            gradient_fd,
            hessian_fd,
            exp_inequalities,
            stay_in_ball,
            appendix,
            focp,
        ]
        .into_iter()
        .map(|f| s.spawn(f))
        .collect();
        let l2 = s.spawn(|| {
            let instances: Vec<(Observation, RotationStack)> = l2_instances()
                .into_iter()
                .map(|obs| {
                    let g = reference_optimum(&obs, Group::SO).unwrap();
                    (obs, g)
                })
                .collect();
            (l2_bound(&instances), linf_bound(&instances))
        });
        let local = s.spawn(|| {
            let runs = in_regime_runs();
            (hessian_pd(&runs), error_bound(&runs), ascent_and_rate(&runs))
        });
        let mut simple: Vec<Outcome> = simple.into_iter().map(|h| h.join().unwrap()).collect();
        let (c5, c6) = l2.join().unwrap();
        let (c7, c8, c9) = local.join().unwrap();
        let c12 = simple.pop().unwrap();
        let c11 = simple.pop().unwrap();
        let c10 = simple.pop().unwrap();
        let mut all = simple;
        all.extend([c5, c6, c7, c8, c9, c10, c11, c12]);
        all
    });
    let mut failed = 0;
    for (i, (name, o)) in names.iter().zip(&outcomes).enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} criterion {:>2}: {name}: {}", i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed in {:.1?}", outcomes.len() - failed, started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
