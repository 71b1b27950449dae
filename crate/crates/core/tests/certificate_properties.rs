use advsysid::certificate::{build_net, certify, z_sum, CertifyMode};
use advsysid::disturbances::{example1_model, remark1_model};
use advsysid::dynamics::{random_system, simulate, SystemSpec};
use advsysid::linalg::{norm2, Matrix, Vector};
use advsysid::seed::rng_from_seed;
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn unit(v: Vec<f64>) -> Vector {
    let n = norm2(&v);
    v.into_iter().map(|c| c / n).collect()
}

#[test]
fn nets_cover_random_directions() {
    let mut rng = rng_from_seed(3);
    for (d, eps) in [(2, 0.1), (2, 0.02), (3, 0.2), (3, 0.1)] {
        let net = build_net(d, eps).unwrap();
        assert!(net.covering_radius <= eps);
        for p in &net.points {
            assert!((norm2(p) - 1.0).abs() < 1e-12);
        }
        for _ in 0..2000 {
            let y = unit((0..d).map(|_| StandardNormal.sample(&mut rng)).collect());
            let nearest = net
                .points
                .iter()
                .map(|p| norm2(&p.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>()))
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= net.covering_radius, "d={d} eps={eps}: {nearest}");
        }
    }
}

#[test]
fn certified_trajectories_pass_dense_sampling() {
    let mut certified = 0;
    for seed in 0..30 {
        let d = 1 + (seed as usize % 3);
        let spec = random_system(d, 0.6, seed).unwrap();
        let traj = simulate(&spec, &example1_model(0.6).unwrap(), 400, seed).unwrap();
        let report = certify(&traj, None, CertifyMode::Exact).unwrap();
        if !report.certified {
            continue;
        }
        certified += 1;
        assert!(report.margin > 0.0);
        let sampled = certify(&traj, None, CertifyMode::Sampled { n: 5000, seed }).unwrap();
        assert!(!sampled.certified);
        assert!(sampled.per_coordinate_min.iter().all(|m| *m > 0.0));
    }
    assert!(certified >= 20, "only {certified} of 30 long runs certified");
}

#[test]
fn remark1_is_refuted_in_every_mode() {
    let spec = SystemSpec::new(Matrix::from_vec(1, 1, vec![0.5]).unwrap(), vec![0.5]).unwrap();
    let traj = simulate(&spec, &remark1_model(), 500, 0).unwrap();
    for mode in [CertifyMode::Exact, CertifyMode::Sampled { n: 100, seed: 1 }] {
        let r = certify(&traj, None, mode).unwrap();
        assert!(!r.certified);
        assert!(r.per_coordinate_min[0] < 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn z_sum_is_lipschitz(seed in 0u64..10_000, d in 1usize..5, h in 1e-6..0.5f64) {
        let spec = random_system(d, 0.7, seed).unwrap();
        let traj = simulate(&spec, &example1_model(0.5).unwrap(), 80, seed).unwrap();
        let mut rng = rng_from_seed(seed ^ 0xabc);
        let y = unit((0..d).map(|_| StandardNormal.sample(&mut rng)).collect());
        let y2 = unit(y.iter().map(|c| c + h * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect());
        let gap = norm2(&y.iter().zip(&y2).map(|(a, b)| a - b).collect::<Vec<_>>());
        let lip: f64 = traj.states[..traj.horizon()].iter().map(|x| norm2(x)).sum();
        for i in 0..d {
            let diff = (z_sum(&traj, i, &y).unwrap() - z_sum(&traj, i, &y2).unwrap()).abs();
            prop_assert!(diff <= lip * gap * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn sampled_mode_never_certifies(seed in 0u64..10_000, d in 1usize..6) {
        let spec = random_system(d, 0.5, seed).unwrap();
        let traj = simulate(&spec, &example1_model(0.5).unwrap(), 50, seed).unwrap();
        let r = certify(&traj, None, CertifyMode::Sampled { n: 64, seed }).unwrap();
        prop_assert!(!r.certified);
        prop_assert_eq!(r.epsilon, None);
    }
}
