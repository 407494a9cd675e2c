use std::f64::consts::{PI, SQRT_2};

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

use rotsync_core::diagnostics::{check_distance_chain, class_distance_nuclear, random_skew_with_norm};
use rotsync_core::estimators::spectral_rgm;
use rotsync_core::io::{read_observation, read_stack, write_observation, write_stack};
use rotsync_core::linalg::{block, skew_part};
use rotsync_core::manifold::{exp_map_stack, project_orthogonal, project_special_orthogonal, skew_exp, skew_log};
use rotsync_core::problem::{gaussian_instance, gaussian_noise, random_rotation_stack};
use rotsync_core::quotient::{hess_quadratic, hess_vec, horizontal_project, objective, procrustes_align, riemannian_grad};
use rotsync_core::rng::{stream, Domain};
use rotsync_core::{Group, Mat, SkewBlock, SkewStack, SolveOptions};

fn gaussian_mat(seed: u64, tag: usize, rows: usize, cols: usize) -> Mat {
    let mut rng = stream(seed, Domain::Probe, tag, 99);
    Mat::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn tangent(seed: u64, tag: usize, n: usize, d: usize) -> SkewStack {
    SkewStack::from_blocks_skew_part(&gaussian_mat(seed, tag, n * d, d), d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_inverts_exp_inside_the_radius(seed in any::<u64>(), d in 2usize..=4) {
        let mut rng = stream(seed, Domain::Probe, 0, 1);
        let e = random_skew_with_norm(&mut rng, d, SQRT_2 * PI - 1e-2);
        let r = skew_exp(&SkewBlock::from_skew_part(&e));
        prop_assert!((r.transpose() * &r - Mat::identity(d, d)).norm() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        let back = skew_log(&r).unwrap();
        prop_assert!((back.as_mat() - &e).norm() < 1e-9, "err {}", (back.as_mat() - &e).norm());
    }

    #[test]
    fn projections_are_idempotent(seed in any::<u64>(), d in 1usize..=4) {
        let z = gaussian_mat(seed, 0, d, d);
        let p = project_orthogonal(&z).unwrap();
        prop_assert!((p.transpose() * &p - Mat::identity(d, d)).norm() < 1e-12);
        prop_assert!((project_orthogonal(&p).unwrap() - &p).norm() < 1e-12);
        let s = project_special_orthogonal(&z).unwrap();
        prop_assert!((s.determinant() - 1.0).abs() < 1e-12);
        prop_assert!((project_special_orthogonal(&s).unwrap() - &s).norm() < 1e-12);
        // no rotation is closer to z than its projection
        let other = project_special_orthogonal(&gaussian_mat(seed, 1, d, d)).unwrap();
        prop_assert!((&z - &s).norm() <= (&z - &other).norm() + 1e-12);
    }

    #[test]
    fn horizontal_projection_removes_the_block_mean(seed in any::<u64>(), n in 2usize..12, d in 2usize..=3) {
        let g = random_rotation_stack(n, d, seed).unwrap();
        let h = horizontal_project(&g, &tangent(seed, 0, n, d)).unwrap();
        prop_assert!(h.block_sum().norm() < 1e-12);
        let again = horizontal_project(&g, &h).unwrap();
        prop_assert!((again.as_mat() - h.as_mat()).norm() < 1e-12);
        prop_assert!(riemannian_grad(&gaussian_instance(n, d, 0.2, seed).unwrap().c, &g).block_sum().norm() < 1e-10);
    }

    #[test]
    fn distance_chain_holds(seed in any::<u64>(), n in 2usize..15, d in 2usize..=3, len in 0.0f64..2.0) {
        let x = random_rotation_stack(n, d, seed).unwrap();
        let y = exp_map_stack(&x, &tangent(seed, 1, n, d), len / (n as f64).sqrt());
        for e in check_distance_chain(&x, &y) {
            prop_assert!(e.passed(), "{:?}", e);
        }
    }

    #[test]
    fn hessian_quadratic_form_agrees(seed in any::<u64>(), n in 2usize..12, d in 2usize..=3) {
        let obs = gaussian_instance(n, d, 0.5, seed).unwrap();
        let g = random_rotation_stack(n, d, seed ^ 0x5a5a).unwrap();
        let h = horizontal_project(&g, &tangent(seed, 2, n, d)).unwrap();
        let form = hess_vec(&obs.c, &g, &h).dot(&h);
        let quad = hess_quadratic(&obs.c, &g, &h);
        assert_relative_eq!(form, -2.0 * quad, max_relative = 1e-9, epsilon = 1e-9);
    }

    #[test]
    fn objective_is_class_invariant(seed in any::<u64>(), n in 2usize..12, d in 1usize..=3) {
        let obs = gaussian_instance(n, d, 0.5, seed).unwrap();
        let g = random_rotation_stack(n, d, seed.wrapping_add(1)).unwrap();
        let q = project_orthogonal(&gaussian_mat(seed, 3, d, d)).unwrap();
        let f = objective(&obs.c, &g);
        assert_relative_eq!(f, objective(&obs.c, &g.right_mul(&q)), max_relative = 1e-12);
    }

    #[test]
    fn noise_is_symmetric_with_empty_diagonal(seed in any::<u64>(), n in 2usize..10, d in 1usize..=3) {
        let noise = gaussian_noise(n, d, 0.7, seed).unwrap();
        let m = noise.as_mat();
        prop_assert_eq!(m, &m.transpose());
        for i in 0..n {
            prop_assert!(m.view((i * d, i * d), (d, d)).norm() == 0.0);
        }
        // counter-based streams: block (0, 1) does not depend on n
        let bigger = gaussian_noise(n + 3, d, 0.7, seed).unwrap();
        prop_assert_eq!(m.view((0, d), (d, d)), bigger.as_mat().view((0, d), (d, d)));
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), n in 2usize..8, d in 1usize..=3) {
        let a = gaussian_instance(n, d, 0.3, seed).unwrap();
        let b = gaussian_instance(n, d, 0.3, seed).unwrap();
        prop_assert_eq!(&a.c, &b.c);
        prop_assert_eq!(write_observation(&a), write_observation(&b));
    }

    #[test]
    fn procrustes_distance_matches_nuclear_oracle(seed in any::<u64>(), n in 2usize..12, d in 1usize..=3) {
        let x = random_rotation_stack(n, d, seed).unwrap();
        let y = random_rotation_stack(n, d, seed.wrapping_add(7)).unwrap();
        let a = procrustes_align(x.as_mat(), y.as_mat()).unwrap();
        let oracle = class_distance_nuclear(x.as_mat(), y.as_mat());
        // the nuclear formula is only accurate to about sqrt(eps) near zero
        prop_assert!((a.dist_f - oracle).abs() < 1e-6 * (n as f64).sqrt());
        prop_assert!(a.dist_f <= (x.as_mat() - y.as_mat()).norm() + 1e-12);
        prop_assert!(a.dist_inf <= a.dist_f + 1e-12);
    }

    #[test]
    fn text_formats_round_trip(seed in any::<u64>(), n in 2usize..6, d in 1usize..=3) {
        let obs = gaussian_instance(n, d, 0.25, seed).unwrap();
        let back = read_observation(&write_observation(&obs)).unwrap();
        prop_assert_eq!(&back.c, &obs.c);
        let g = obs.truth.unwrap();
        prop_assert_eq!(read_stack(&write_stack(&g)).unwrap(), g);
    }

    #[test]
    fn gradient_ascent_never_decreases_the_objective(seed in any::<u64>(), n in 3usize..15, d in 2usize..=3) {
        let obs = gaussian_instance(n, d, 0.05, seed).unwrap();
        let est = spectral_rgm(&obs, Group::SO, SolveOptions::default()).unwrap();
        for r in &est.trace.records {
            if let Some(a) = r.ascent {
                prop_assert!(a >= 0.0, "iteration {} lost {}", r.iter, a);
            }
        }
        prop_assert!(est.g_hat.max_orthogonality_residual() < 1e-12);
    }
}

#[test]
fn skew_part_of_a_tangent_is_itself() {
    let t = tangent(3, 0, 4, 3);
    assert_eq!(SkewStack::from_blocks_skew_part(t.as_mat(), 3).as_mat(), t.as_mat());
    let b = block(t.as_mat(), 2, 3);
    assert!((skew_part(&b) - &b).norm() == 0.0);
}
