use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simal_core::rng::{from_seed, stream};
use simal_core::theory::{fit_slope, run_policy, scaling_experiment, LinearBanditState, Policy, ScalingConfig};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn state(d: usize, m: f64, sigma: f64, seed: u64) -> LinearBanditState {
    LinearBanditState::random(d, m, sigma, &mut from_seed(seed)).unwrap()
}

#[test]
fn noiseless_greedy_hits_the_shrinkage_floor() {
    for (d, m) in [(3, 1.0), (6, 2.0), (10, 0.5)] {
        let mut s = state(d, m, 0.0, d as u64);
        for _ in 0..d {
            let th = s.select_greedy().unwrap();
            s.observe(&th, &mut from_seed(0)).unwrap();
        }
        let floor = m / (m + 1.0);
        assert!((s.error().unwrap() - floor).abs() < 1e-9, "d {d}: {} vs {floor}", s.error().unwrap());
    }
}

#[test]
fn incremental_precision_equals_batch() {
    let mut s = state(5, 1.5, 0.3, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut phis = Vec::new();
    for k in 0..40 {
        let th = if k % 2 == 0 { s.select_greedy().unwrap() } else { s.select_random(&mut rng) };
        phis.push(s.feature(&th).unwrap());
        s.observe(&th, &mut rng).unwrap();
        let mut v = DMatrix::identity(5, 5) * 1.5;
        for p in &phis {
            v += p * p.transpose();
        }
        assert!((&v - &s.v).norm() < 1e-10);
        let eig = SymmetricEigen::new(s.v.clone());
        assert!(s.v.clone().cholesky().is_some());
        assert!(eig.eigenvalues.min() >= 1.5 - 1e-10);
    }
}

#[test]
fn candidate_greedy_agrees_with_exact_and_brute_force() {
    let mut s = state(4, 1.0, 0.5, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..6 {
        let th = s.select_random(&mut rng);
        s.observe(&th, &mut rng).unwrap();
    }
    let exact = s.select_greedy().unwrap();
    let mut cands: Vec<DVector<f64>> = (0..30).map(|_| s.select_random(&mut rng)).collect();
    cands.insert(17, exact);
    assert_eq!(s.select_greedy_among(&cands).unwrap(), 17);

    let inv = s.v.clone().try_inverse().unwrap();
    let cands: Vec<DVector<f64>> = (0..50).map(|_| s.select_random(&mut rng)).collect();
    let brute = cands
        .iter()
        .map(|c| {
            let p = s.feature(c).unwrap();
            (&inv * &p).norm_squared()
        })
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    assert_eq!(s.select_greedy_among(&cands).unwrap(), brute);
}

#[test]
fn random_designs_are_standard_normal() {
    let d = 3;
    let s = state(d, 1.0, 0.5, 5);
    let n = 100_000;
    let mut rng = from_seed(6);
    let draws: Vec<DVector<f64>> = (0..n).map(|_| s.select_random(&mut rng)).collect();
    for j in 0..d {
        let mean = draws.iter().map(|v| v[j]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "coordinate {j}: {mean}");
    }
    let chi2 = ChiSquared::new(d as f64).unwrap();
    let mut sq: Vec<f64> = draws.iter().map(|v| v.norm_squared()).collect();
    sq.sort_by(f64::total_cmp);
    let ks = sq
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = chi2.cdf(*x);
            ((i + 1) as f64 / n as f64 - c).abs().max((c - i as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS {ks}");
    assert_eq!(s.select_random(&mut from_seed(9)), s.select_random(&mut from_seed(9)));
}

#[test]
fn greedy_sweeps_keep_the_spectrum_flat() {
    let d = 6;
    let psi = DMatrix::identity(d, d);
    let z = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut s = LinearBanditState::with_parts(psi, z, 1.0, 0.0).unwrap();
    for k in 1..=5 * d {
        let th = s.select_greedy().unwrap();
        s.observe(&th, &mut from_seed(0)).unwrap();
        if k % d == 0 {
            let e = SymmetricEigen::new(s.v.clone()).eigenvalues;
            assert!(e.max() - e.min() <= 1.0 + 1e-9, "after {k} rounds: {e}");
        }
    }
}

#[test]
fn posterior_samples_have_the_stated_covariance() {
    let mut s = state(3, 1.0, 0.7, 7);
    let mut rng = from_seed(8);
    for _ in 0..5 {
        let th = s.select_random(&mut rng);
        s.observe(&th, &mut rng).unwrap();
    }
    let n = 100_000;
    let zs: Vec<DVector<f64>> = (0..n).map(|_| s.posterior_sample(&mut rng).unwrap()).collect();
    let mean = zs.iter().fold(DVector::zeros(3), |a, z| a + z) / n as f64;
    let mut cov = DMatrix::zeros(3, 3);
    for z in &zs {
        let c = z - &mean;
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    let inv = s.v.clone().try_inverse().unwrap();
    let want = &inv * &inv * (s.sigma * s.sigma);
    assert!((&cov - &want).norm() / want.norm() < 0.05);
    assert!((mean - s.estimate().unwrap()).norm() < 0.01);
}

fn k_slope(policy: Policy, d: usize) -> f64 {
    let ks: Vec<usize> = [10, 20, 40, 70, 100].iter().map(|c| c * d).collect();
    let reps = 100;
    let mut mean = vec![0.0; ks.len()];
    for r in 0..reps {
        let s = LinearBanditState::random(d, 1.0, 0.5, &mut stream(1, &[r, 0])).unwrap();
        for (m, e) in mean.iter_mut().zip(run_policy(s, policy, 100 * d, &ks, 1, &[r]).unwrap()) {
            *m += e / reps as f64;
        }
    }
    let lk: Vec<f64> = ks.iter().map(|k| (*k as f64).ln()).collect();
    let le: Vec<f64> = mean.iter().map(|e| e.ln()).collect();
    fit_slope(&lk, &le)
}

#[test]
fn greedy_error_decays_as_inverse_root_k() {
    let slope = k_slope(Policy::Greedy, 4);
    assert!((-0.65..=-0.35).contains(&slope), "slope {slope}");
}

#[test]
fn random_error_decays_as_inverse_root_k() {
    let slope = k_slope(Policy::Random, 4);
    assert!((-0.65..=-0.35).contains(&slope), "slope {slope}");
}

#[test]
fn scaling_experiment_is_reproducible() {
    let cfg = ScalingConfig {
        dims: vec![2, 3],
        rounds_per_dim: 5,
        replicates: 4,
        seed: 3,
        ..Default::default()
    };
    let a = scaling_experiment(&cfg).unwrap();
    assert_eq!(a, scaling_experiment(&cfg).unwrap());
    assert_eq!(a.rows.len(), 2 * 2 * 4);
    assert!(scaling_experiment(&ScalingConfig { dims: vec![4], ..cfg }).is_err());
}
