use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use rotsync_core::diagnostics::{certify, CertifyOptions};
use rotsync_core::estimators::{gpm_solve, rgm_solve, spectral_init};
use rotsync_core::manifold::skew_exp;
use rotsync_core::problem::gaussian_instance;
use rotsync_core::quotient::{hess_vec, riemannian_grad};
use rotsync_core::{Group, InitKind, Mat, SkewBlock, SolveOptions, StepsizePolicy};

fn sigma(n: usize, d: usize) -> f64 {
    0.5 * (n as f64).powf(0.25) / (40.0 * d as f64)
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for &n in &[20usize, 50, 100] {
        let d = 3;
        let obs = gaussian_instance(n, d, sigma(n, d), 1).unwrap();
        let init = spectral_init(&obs, Group::SO).unwrap();
        group.bench_with_input(BenchmarkId::new("spectral", n), &obs, |b, obs| {
            b.iter(|| spectral_init(black_box(obs), Group::SO).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("spectral+rgm", n), &obs, |b, obs| {
            b.iter(|| {
                rgm_solve(obs, &init.g0, StepsizePolicy::safe_default(n, d), SolveOptions::default(), InitKind::Spectral)
                    .unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("spectral+gpm", n), &obs, |b, obs| {
            b.iter(|| gpm_solve(obs, &init.g0, SolveOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn derivatives(c: &mut Criterion) {
    let (n, d) = (100, 3);
    let obs = gaussian_instance(n, d, sigma(n, d), 2).unwrap();
    let g = spectral_init(&obs, Group::SO).unwrap().g0;
    let grad = riemannian_grad(&obs.c, &g);
    c.bench_function("riemannian_grad n=100", |b| b.iter(|| riemannian_grad(black_box(&obs.c), &g)));
    c.bench_function("hess_vec n=100", |b| b.iter(|| hess_vec(black_box(&obs.c), &g, &grad)));
    let e = SkewBlock::from_skew_part(&Mat::from_fn(3, 3, |i, j| (i as f64 - 2.0 * j as f64) * 0.3));
    c.bench_function("skew_exp d=3", |b| b.iter(|| skew_exp(black_box(&e))));
}

fn certification(c: &mut Criterion) {
    let mut group = c.benchmark_group("certify");
    group.sample_size(10);
    let (n, d) = (50, 3);
    let obs = gaussian_instance(n, d, sigma(n, d), 3).unwrap();
    let init = spectral_init(&obs, Group::SO).unwrap();
    let opts = SolveOptions { keep_iterates: true, ..SolveOptions::default() };
    let est = rgm_solve(&obs, &init.g0, StepsizePolicy::safe_default(n, d), opts, InitKind::Spectral).unwrap();
    group.bench_function("full report n=50", |b| b.iter(|| certify(&obs, &est, CertifyOptions::default()).unwrap()));
    group.finish();
}

criterion_group!(benches, solvers, derivatives, certification);
criterion_main!(benches);
