//! Estimators against brute-force or closed-form references.

use advsysid::disturbances::{example1_model, example2_model, gaussian_model};
use advsysid::dynamics::{random_system, simulate};
use advsysid::estimators::{
    fit_l1, fit_l2norm, fit_ols, l1_loss, l2norm_loss, lad_row, squared_loss, Method, L2_DEFAULT_TOL, LAD_DEFAULT_TOL,
};
use advsysid::linalg::{frobenius_distance, Matrix, Vector};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};

mod common;
use common::{enumerate_vertices, scalar_lad_objective, weighted_median};

#[test]
fn scalar_lad_is_the_weighted_median() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cauchy = Cauchy::new(0.0, 1.0).unwrap();
    for case in 0..1000 {
        let n = rng.random_range(1..=40);
        let a_true: f64 = rng.random_range(-2.0..2.0);
        let exact_share: f64 = rng.random();
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> =
            x.iter()
                .map(|xi| {
                    if rng.random::<f64>() < exact_share {
                        a_true * xi
                    } else {
                        a_true * xi + cauchy.sample(&mut rng)
                    }
                })
                .collect();
        let regs: Vec<Vector> = x.iter().map(|v| vec![*v]).collect();
        let fit = lad_row(&regs, &y, LAD_DEFAULT_TOL).unwrap();
        let wm = weighted_median(&x, &y);
        let (f_fit, f_wm) = (scalar_lad_objective(&x, &y, fit.coef[0]), scalar_lad_objective(&x, &y, wm));
        assert!(f_fit <= f_wm + 1e-9 * (1.0 + f_wm), "case {case}: objective {f_fit} vs {f_wm}");
        if !fit.non_unique {
            assert!((fit.coef[0] - wm).abs() <= 1e-9 * (1.0 + wm.abs()), "case {case}: {} vs {wm}", fit.coef[0]);
        }
    }
}

#[test]
fn two_dimensional_lad_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cauchy = Cauchy::new(0.0, 2.0).unwrap();
    for case in 0..100 {
        let truth = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let regs: Vec<Vector> =
            (0..12).map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]).collect();
        let y: Vec<f64> = regs
            .iter()
            .map(|r| {
                let clean = r[0] * truth[0] + r[1] * truth[1];
                if case % 2 == 0 && rng.random::<f64>() < 0.4 {
                    clean
                } else {
                    clean + cauchy.sample(&mut rng)
                }
            })
            .collect();
        let fit = lad_row(&regs, &y, LAD_DEFAULT_TOL).unwrap();
        let best = enumerate_vertices(&regs, &y);
        assert!((fit.objective - best).abs() <= 1e-8 * (1.0 + best), "case {case}: {} vs {best}", fit.objective);
        assert!(fit.converged);
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (k - 1..n)
        .flat_map(|last| {
            combinations(last, k - 1).into_iter().map(move |mut c| {
                c.push(last);
                c
            })
        })
        .collect()
}

#[test]
fn degenerate_three_dimensional_lad_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..100 {
        let truth: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let regs: Vec<Vector> = (0..11).map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let y: Vec<f64> = regs
            .iter()
            .map(|r| {
                let clean: f64 = r.iter().zip(&truth).map(|(a, b)| a * b).sum();
                if rng.random::<f64>() < 0.6 {
                    clean
                } else {
                    clean + 5.0 * rng.random::<f64>()
                }
            })
            .collect();
        let mut best = f64::INFINITY;
        for idx in combinations(11, 3) {
            let b = DMatrix::from_fn(3, 3, |r, c| regs[idx[r]][c]);
            let rhs = nalgebra::DVector::from_fn(3, |r, _| y[idx[r]]);
            if let Some(coef) = b.lu().solve(&rhs) {
                let obj: f64 = regs
                    .iter()
                    .zip(&y)
                    .map(|(r, yt)| (yt - r[0] * coef[0] - r[1] * coef[1] - r[2] * coef[2]).abs())
                    .sum();
                best = best.min(obj);
            }
        }
        let fit = lad_row(&regs, &y, LAD_DEFAULT_TOL).unwrap();
        assert!((fit.objective - best).abs() <= 1e-8 * (1.0 + best), "case {case}: {} vs {best}", fit.objective);
    }
}

fn na_states(states: &[Vector]) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = states[0].len();
    let t = states.len() - 1;
    let x = DMatrix::from_fn(d, t, |r, c| states[c][r]);
    let y = DMatrix::from_fn(d, t, |r, c| states[c + 1][r]);
    (x, y)
}

#[test]
fn ols_matches_closed_form() {
    for seed in 0..20 {
        let d = 1 + (seed as usize % 6);
        let spec = random_system(d, 0.8, seed).unwrap();
        let traj = simulate(&spec, &gaussian_model(1.0, 1.0).unwrap(), 50 + 10 * d, seed).unwrap();
        let fit = fit_ols(&traj).unwrap();
        let (x, y) = na_states(&traj.states);
        let reference = &y * x.transpose() * (&x * x.transpose()).try_inverse().unwrap();
        let reference = Matrix::from_vec(d, d, reference.transpose().as_slice().to_vec()).unwrap();
        let gap = frobenius_distance(&fit.a_hat, &reference).unwrap();
        assert!(gap <= 1e-10 * (1.0 + reference.frobenius_norm()), "seed {seed}: {gap}");
    }
}

#[test]
fn ols_residuals_are_orthogonal_to_regressors() {
    let spec = random_system(5, 0.9, 3).unwrap();
    let traj = simulate(&spec, &example2_model(0.5).unwrap(), 400, 3).unwrap();
    let fit = fit_ols(&traj).unwrap();
    let (x, y) = na_states(&traj.states);
    let a = DMatrix::from_row_slice(5, 5, fit.a_hat.entries());
    let r = &y - &a * &x;
    let gram_scale = (&x * x.transpose()).norm() * a.norm();
    assert!((r * x.transpose()).norm() <= 1e-9 * gram_scale);
}

/// Objective at every point of a `3^k` grid around `a`, perturbing only the
/// leading 2x2 block.
fn grid_neighbors(a: &Matrix, h: f64) -> Vec<Matrix> {
    let mut out = Vec::new();
    for code in 0..81usize {
        let mut m = a.clone();
        let mut c = code;
        for (r, col) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            m[(r, col)] += h * ((c % 3) as f64 - 1.0);
            c /= 3;
        }
        out.push(m);
    }
    out
}

#[test]
fn l2norm_is_a_grid_local_minimum() {
    for seed in 0..5 {
        let spec = random_system(2, 0.7, seed).unwrap();
        let traj = simulate(&spec, &example1_model(0.6).unwrap(), 150, seed).unwrap();
        let fit = fit_l2norm(&traj, L2_DEFAULT_TOL).unwrap();
        assert!(fit.converged);
        for h in [1e-2, 1e-3, 1e-4] {
            for m in grid_neighbors(&fit.a_hat, h) {
                assert!(l2norm_loss(&m, &traj.states) >= fit.objective - L2_DEFAULT_TOL * (1.0 + fit.objective));
            }
        }
    }
}

#[test]
fn each_estimator_wins_on_its_own_loss() {
    for seed in 0..6 {
        let spec = random_system(3, 0.8, seed).unwrap();
        let traj = simulate(&spec, &example1_model(0.7).unwrap(), 300, seed).unwrap();
        let fits: Vec<_> = [
            fit_ols(&traj).unwrap(),
            fit_l2norm(&traj, L2_DEFAULT_TOL).unwrap(),
            fit_l1(&traj, LAD_DEFAULT_TOL).unwrap(),
        ]
        .into();
        for own in &fits {
            let loss = own.method.loss(&own.a_hat, &traj.states);
            assert!((loss - own.objective).abs() <= 1e-9 * (1.0 + loss));
            for other in &fits {
                let rival = own.method.loss(&other.a_hat, &traj.states);
                assert!(loss <= rival + 1e-7 * (1.0 + rival), "{} loses to {}", own.method, other.method);
            }
        }
        assert_eq!(fits.iter().map(|f| f.method).collect::<Vec<_>>(), Method::ALL);
    }
}

#[test]
fn l1_is_a_local_minimum_in_random_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..5 {
        let spec = random_system(4, 0.9, seed).unwrap();
        let traj = simulate(&spec, &example1_model(0.5).unwrap(), 120, seed).unwrap();
        let fit = fit_l1(&traj, LAD_DEFAULT_TOL).unwrap();
        for _ in 0..200 {
            let dir = Matrix::from_vec(4, 4, (0..16).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap();
            for h in [1e-2, 1e-5] {
                let m = fit.a_hat.add(&dir.scaled(h)).unwrap();
                assert!(l1_loss(&m, &traj.states) >= fit.objective - 1e-9 * (1.0 + fit.objective));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_vanish_only_on_exact_fits(seed in 0u64..1000, d in 1usize..5) {
        let spec = random_system(d, 0.7, seed).unwrap();
        let traj = simulate(&spec, &gaussian_model(0.0, 1.0).unwrap(), 30, seed).unwrap();
        prop_assert_eq!(squared_loss(&spec.a_star, &traj.states), 0.0);
        prop_assert_eq!(l1_loss(&spec.a_star, &traj.states), 0.0);
        let fit = fit_l1(&traj, LAD_DEFAULT_TOL).unwrap();
        prop_assert!(frobenius_distance(&fit.a_hat, &spec.a_star).unwrap() < 1e-9);
    }

    #[test]
    fn lad_is_equivariant_to_target_scaling(seed in 0u64..1000, c in 0.1..10.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regs: Vec<Vector> = (0..15).map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..15).map(|_| StandardNormal.sample(&mut rng)).collect();
        let base = lad_row(&regs, &y, LAD_DEFAULT_TOL).unwrap();
        let scaled_y: Vec<f64> = y.iter().map(|v| c * v).collect();
        let scaled = lad_row(&regs, &scaled_y, LAD_DEFAULT_TOL).unwrap();
        prop_assert!((scaled.objective - c * base.objective).abs() <= 1e-9 * (1.0 + c * base.objective));
    }
}
