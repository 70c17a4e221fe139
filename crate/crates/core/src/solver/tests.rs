use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::penalties::{build_lambda, build_mu, PenaltyConfig};
use crate::rng::stream_rng;

fn gaussian_dataset(n: usize, p: usize, beta: &[f64], noise: f64, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut y = &x * DVector::from_column_slice(beta);
    for v in y.iter_mut() {
        *v += noise * rng.sample::<f64, _>(StandardNormal);
    }
    Dataset::new(x, y).unwrap()
}

fn default_penalties(n: usize, p: usize) -> (WeightSequence, WeightSequence) {
    let cfg = PenaltyConfig::default();
    (build_lambda(n, p, &cfg).unwrap(), build_mu(n, &cfg).unwrap())
}

fn max_rel(a: &[f64], b: &[f64], scale: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

#[test]
fn objective_examples() {
    let ds = Dataset::new(DMatrix::zeros(2, 1), DVector::from_vec(vec![1.0, 1.0])).unwrap();
    let lam = WeightSequence::new(vec![1.0]).unwrap();
    let mu = WeightSequence::new(vec![1.0, 0.5]).unwrap();
    let v = objective_eval(&ds, &[0.0], &[0.0, 0.0], &lam, &mu).unwrap();
    assert!((v - 0.5f64.sqrt()).abs() < 1e-15);

    let theta: Vec<f64> = ds.y.iter().map(|y| y / 2f64.sqrt()).collect();
    let v = objective_eval(&ds, &[0.0], &theta, &lam, &mu).unwrap();
    let pen = norm_eval(&theta, &mu).unwrap();
    assert!((v - pen).abs() < 1e-15);

    let zero = Dataset::new(DMatrix::zeros(2, 1), DVector::zeros(2)).unwrap();
    assert_eq!(objective_eval(&zero, &[0.0], &[0.0, 0.0], &lam, &mu).unwrap(), 0.0);
    assert!(objective_eval(&ds, &[0.0, 1.0], &[0.0, 0.0], &lam, &mu).is_err());
}

#[test]
fn zero_response_returns_zero_estimate() {
    let ds = Dataset::new(DMatrix::from_element(5, 3, 1.0), DVector::zeros(5)).unwrap();
    let (lam, mu) = default_penalties(5, 3);
    let fr = fit_pivotal(&ds, &lam, &mu, &FitConfig::default()).unwrap();
    assert!(fr.beta_hat.iter().chain(&fr.theta_hat).all(|&v| v == 0.0));
    assert_eq!(fr.status, FitStatus::DegenerateSigma);
    assert!(fr.sigma_hat > 0.0);
    assert_eq!(fr.objective(), 0.0);
}

#[test]
fn inner_problem_stationary_start_and_dominant_penalties() {
    let ds = Dataset::new(DMatrix::from_element(4, 2, 1.0), DVector::zeros(4)).unwrap();
    let (lam, mu) = default_penalties(4, 2);
    let z = (vec![0.0; 2], vec![0.0; 4]);
    let (b, t) = fit_weighted_slope(&ds, &lam, &mu, 0.7, &FitConfig::default(), Some((&z.0, &z.1)))
        .unwrap();
    assert_eq!((b, t), z);

    let ds = Dataset::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 3.0)).unwrap();
    let big = WeightSequence::new(vec![1e6]).unwrap();
    let (b, t) = fit_weighted_slope(&ds, &big, &big, 1.0, &FitConfig::default(), None).unwrap();
    assert_eq!(b, vec![0.0]);
    assert_eq!(t, vec![0.0]);
}

#[test]
fn trace_is_monotone_and_sigma_is_stationary() {
    let ds = gaussian_dataset(40, 8, &[2.0, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0], 0.5, 3);
    let (lam, mu) = default_penalties(40, 8);
    let fr = fit_pivotal(&ds, &lam, &mu, &FitConfig::default()).unwrap();
    assert_eq!(fr.status, FitStatus::Converged);
    for w in fr.objective_trace.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-10), "{:?}", fr.objective_trace);
    }
    let q = ds.q(&fr.beta_hat, &fr.theta_hat);
    assert!((fr.sigma_hat - (2.0 * q).sqrt()).abs() <= 1e-6 * fr.sigma_hat);
    assert!(fr.kkt.unwrap().within(KKT_TOL));
}

#[test]
fn scaled_problem_doubles_the_pivotal_objective() {
    // Q/s + s + ||.||_{2 lam} + ||.||_{2 mu} at s = sqrt(Q) is 2 L.
    let ds = gaussian_dataset(30, 4, &[1.0, 0.0, -2.0, 0.0], 0.3, 11);
    let (lam, mu) = default_penalties(30, 4);
    let fr = fit_pivotal(&ds, &lam, &mu, &FitConfig::default()).unwrap();
    let q = ds.q(&fr.beta_hat, &fr.theta_hat);
    let s = q.sqrt();
    let scaled = q / s
        + s
        + norm_eval(&fr.beta_hat, &lam.scaled(2.0)).unwrap()
        + norm_eval(&fr.theta_hat, &mu.scaled(2.0)).unwrap();
    let l = objective_eval(&ds, &fr.beta_hat, &fr.theta_hat, &lam, &mu).unwrap();
    assert!((scaled - 2.0 * l).abs() <= 1e-12 * l);

    // the inner solver at that sigma reproduces the minimizer
    let (b, t) =
        fit_weighted_slope(&ds, &lam.scaled(2.0), &mu.scaled(2.0), s, &FitConfig::default(), None)
            .unwrap();
    let scale = 1.0 + fr.beta_hat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(max_rel(&b, &fr.beta_hat, scale) < 1e-5);
    assert!(max_rel(&t, &fr.theta_hat, scale) < 1e-5);
}

#[test]
fn single_gross_outlier_is_absorbed() {
    let n = 100;
    let mut rng = stream_rng(5, 0);
    let x = DMatrix::from_element(n, 1, 1.0);
    let theta1 = 1e3 / (n as f64).sqrt();
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        1.0 + 0.01 * e + if i == 0 { 1e3 } else { 0.0 }
    });
    let ds = Dataset::new(x, y).unwrap();
    let (lam, mu) = default_penalties(n, 1);
    let fr = fit_pivotal(&ds, &lam, &mu, &FitConfig::default()).unwrap();
    assert!((fr.beta_hat[0] - 1.0).abs() <= 0.1, "{}", fr.beta_hat[0]);
    assert!((fr.theta_hat[0] - theta1).abs() / theta1 <= 0.05, "{}", fr.theta_hat[0]);

    let base = fit_nonrobust_baseline(&ds, &lam, &FitConfig::default()).unwrap();
    assert!(base.theta_hat.iter().all(|&t| t == 0.0));
    assert!((base.beta_hat[0] - 1.0).abs() > (fr.beta_hat[0] - 1.0).abs());
}

#[test]
fn certificate_detects_perturbation() {
    let ds = gaussian_dataset(30, 3, &[3.0, 0.0, 0.0], 0.5, 2);
    let (lam, mu) = default_penalties(30, 3);
    let mut fr = fit_pivotal(&ds, &lam, &mu, &FitConfig::default()).unwrap();
    let clean = kkt_residual(&ds, &fr, &lam, &mu).unwrap();
    assert!(clean.within(KKT_TOL), "{clean:?}");
    fr.beta_hat[0] += 1.0;
    let bad = kkt_residual(&ds, &fr, &lam, &mu).unwrap();
    assert!(bad.alignment_residual > 1e-2, "{bad:?}");
}

#[test]
fn certificate_for_zero_estimate_under_huge_penalties() {
    let ds = gaussian_dataset(20, 3, &[1.0, 0.0, 0.0], 1.0, 4);
    let lam = WeightSequence::constant(1e3, 3).unwrap();
    let mu = WeightSequence::constant(1e3, 20).unwrap();
    let fr = fit_pivotal(&ds, &lam, &mu, &FitConfig::default()).unwrap();
    assert!(fr.beta_hat.iter().chain(&fr.theta_hat).all(|&v| v == 0.0));
    let k = kkt_residual(&ds, &fr, &lam, &mu).unwrap();
    assert!(k.beta_dual_gap <= 0.0 && k.theta_dual_gap <= 0.0 && k.alignment_residual <= 0.0);
}

#[test]
fn certificate_rejects_interpolation() {
    let ds = Dataset::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 2.0])).unwrap();
    let (lam, mu) = default_penalties(2, 2);
    let fr = FitResult {
        beta_hat: vec![1.0, 2.0],
        theta_hat: vec![0.0, 0.0],
        sigma_hat: 1e-10,
        objective_trace: vec![],
        status: FitStatus::DegenerateSigma,
        kkt: None,
        inner_iterations: 0,
    };
    assert!(matches!(kkt_residual(&ds, &fr, &lam, &mu), Err(Error::Degenerate(_))));
}

#[test]
fn working_set_matches_full_solve() {
    let mut beta = vec![0.0; 200];
    beta[3] = 2.0;
    beta[50] = -1.5;
    beta[120] = 1.0;
    let ds = gaussian_dataset(80, 200, &beta, 0.5, 8);
    let (lam, mu) = default_penalties(80, 200);
    let ws = fit_pivotal(&ds, &lam, &mu, &FitConfig::default()).unwrap();
    let full_cfg = FitConfig {
        working_set: false,
        ..FitConfig::default()
    };
    let full = fit_pivotal(&ds, &lam, &mu, &full_cfg).unwrap();
    assert_eq!(ws.status, FitStatus::Converged);
    assert!((ws.objective() - full.objective()).abs() <= 1e-8 * full.objective());
    assert!(max_rel(&ws.beta_hat, &full.beta_hat, 1.0) < 1e-4);
    let k = kkt_residual(&ds, &ws, &lam, &mu).unwrap();
    assert!(k.within(KKT_TOL), "{k:?}");
}

#[test]
fn row_permutation_permutes_theta() {
    let ds = gaussian_dataset(25, 4, &[1.0, 0.0, 0.0, -1.0], 0.4, 9);
    let (lam, mu) = default_penalties(25, 4);
    let fr = fit_pivotal(&ds, &lam, &mu, &FitConfig::default()).unwrap();
    let perm: Vec<usize> = (0..25).rev().collect();
    let x = DMatrix::from_fn(25, 4, |i, j| ds.x[(perm[i], j)]);
    let y = DVector::from_fn(25, |i, _| ds.y[perm[i]]);
    let pr = fit_pivotal(&Dataset::new(x, y).unwrap(), &lam, &mu, &FitConfig::default()).unwrap();
    assert!(max_rel(&pr.beta_hat, &fr.beta_hat, 1.0) < 1e-6);
    for (i, &pi) in perm.iter().enumerate() {
        assert!((pr.theta_hat[i] - fr.theta_hat[pi]).abs() < 1e-6);
    }
}

#[test]
fn rejects_bad_inputs() {
    let ds = gaussian_dataset(10, 2, &[1.0, 0.0], 1.0, 1);
    let (lam, mu) = default_penalties(10, 2);
    let short = WeightSequence::new(vec![1.0]).unwrap();
    assert!(fit_pivotal(&ds, &short, &mu, &FitConfig::default()).is_err());
    let bad = FitConfig {
        step_safety: 0.0,
        ..FitConfig::default()
    };
    assert!(fit_pivotal(&ds, &lam, &mu, &bad).is_err());
    assert!(fit_weighted_slope(&ds, &lam, &mu, 0.0, &FitConfig::default(), None).is_err());
    assert!(Dataset::new(DMatrix::zeros(3, 2), DVector::zeros(2)).is_err());
}
