//! Linear-algebra primitives against an independent reference (nalgebra).

use advsysid::linalg::{eigenvalues_sym, frobenius_distance, min_eig_sym, solve_spd, spectral_norm, Matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let entries = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, entries).unwrap()
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.entries())
}

#[test]
fn spectral_norm_matches_reference_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for target in [0.6, 0.95, 0.1, 3.0] {
        let m = random_matrix(&mut rng, 10, 10);
        let sigma = to_na(&m).singular_values().max();
        let scaled = m.scaled(target / sigma);
        let got = spectral_norm(&scaled, 1e-10).unwrap();
        assert!((got - target).abs() <= 1e-10 * target, "target {target}, got {got}");
    }
    for (r, c) in [(3, 7), (12, 4), (1, 5)] {
        let m = random_matrix(&mut rng, r, c);
        let sigma = to_na(&m).singular_values().max();
        assert!((spectral_norm(&m, 1e-10).unwrap() - sigma).abs() <= 1e-10 * sigma);
    }
}

#[test]
fn solve_spd_residuals_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let k = rng.random_range(1..=4);
        let b = random_matrix(&mut rng, n, n);
        let g = b.transpose().matmul(&b).unwrap().add(&Matrix::identity(n).scaled(0.1)).unwrap();
        let c = random_matrix(&mut rng, n, k);
        let x = solve_spd(&g, &c).unwrap();
        let resid = frobenius_distance(&g.matmul(&x).unwrap(), &c).unwrap();
        let g_norm = spectral_norm(&g, 1e-10).unwrap();
        let bound = 1e-10 * (g_norm * x.frobenius_norm() + c.frobenius_norm());
        assert!(resid <= bound, "n={n}: residual {resid} > {bound}");
    }
}

#[test]
fn min_eig_from_known_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.random_range(2..=12);
        let q = to_na(&random_matrix(&mut rng, n, n)).qr().q();
        let spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let s = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(spectrum.clone())) * q.transpose();
        let s = Matrix::from_vec(n, n, s.transpose().as_slice().to_vec()).unwrap();
        // exact symmetry for the input check
        let s = s.add(&s.transpose()).unwrap().scaled(0.5);
        let lo = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((min_eig_sym(&s).unwrap() - lo).abs() < 1e-8);
        let mut sorted = spectrum.clone();
        sorted.sort_by(f64::total_cmp);
        for (a, b) in eigenvalues_sym(&s).unwrap().iter().zip(&sorted) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

fn arb_matrix(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0..10.0f64, r * c).prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
    })
}

fn arb_symmetric(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max).prop_flat_map(|n| {
        proptest::collection::vec(-10.0..10.0f64, n * n).prop_map(move |v| {
            let m = Matrix::from_vec(n, n, v).unwrap();
            m.add(&m.transpose()).unwrap().scaled(0.5)
        })
    })
}

proptest! {
    #[test]
    fn spectral_norm_is_homogeneous(m in arb_matrix(8), c in -5.0..5.0f64) {
        let base = spectral_norm(&m, 1e-10).unwrap();
        let scaled = spectral_norm(&m.scaled(c), 1e-10).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-9 * (1.0 + c.abs() * base));
    }

    #[test]
    fn spectral_norm_is_sandwiched_by_frobenius(m in arb_matrix(8)) {
        let s = spectral_norm(&m, 1e-10).unwrap();
        let f = frobenius_distance(&m, &Matrix::zeros(m.rows(), m.cols())).unwrap();
        let k = m.rows().min(m.cols()) as f64;
        prop_assert!(s >= f / k.sqrt() - 1e-9 * (1.0 + f));
        prop_assert!(s <= f + 1e-9 * (1.0 + f));
    }

    #[test]
    fn min_eig_shifts_with_identity(s in arb_symmetric(7), c in -20.0..20.0f64) {
        let n = s.rows();
        let shifted = s.add(&Matrix::identity(n).scaled(c)).unwrap();
        let a = min_eig_sym(&s).unwrap();
        let b = min_eig_sym(&shifted).unwrap();
        prop_assert!((b - (a + c)).abs() < 1e-8);
    }

    #[test]
    fn frobenius_distance_is_a_metric(a in arb_matrix(5)) {
        let b = a.scaled(-0.5);
        let ab = frobenius_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, frobenius_distance(&b, &a).unwrap());
        prop_assert_eq!(frobenius_distance(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(ab == 0.0, a == b);
    }
}
