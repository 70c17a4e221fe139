//! Minimization of the pivotal loss
//!
//! ```text
//! L(beta, theta) = Q(beta, theta)^(1/2) + ||beta||_lambda + ||theta||_mu
//! ```
//!
//! through its scaled form: for fixed `sigma > 0` the function
//! `Q/sigma + sigma/2 + sqrt(2) (||beta||_lambda + ||theta||_mu)` is minimized
//! over `(beta, theta)`, after which `sigma` is reset to `sqrt(2 Q)`. Its
//! minimum over `sigma` equals `sqrt(2) L`, so the alternation decreases `L`
//! monotonically and the returned minimizer is that of `L` itself. The
//! reported noise level is `sigma_hat = sqrt(2 Q_hat)` (normalization constant
//! `k = 1`), which for uncontaminated data estimates the noise standard
//! deviation.
//!
//! The pure form with coefficient 1 on the penalties, `Q/sigma + sigma + pen`,
//! is exposed as [`fit_weighted_slope`]; calling it with doubled penalties at
//! `sigma / sqrt(2)` gives the same inner problem.

mod engine;
pub mod huber;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{dot, norm2_sq, spectral_norm_sq};
use crate::sorted_l1::{dual_unchecked, norm_eval, norm_unchecked, WeightSequence};

pub use huber::{huber, huber_profile_objective, profile_theta};

/// Designs with at most this many columns are always solved on all columns.
const WORKING_SET_MIN_P: usize = 64;
const WORKING_SET_INIT: usize = 50;
/// KKT gap required, together with the objective test, for `Converged`.
pub const KKT_TOL: f64 = 1e-4;
const POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return invalid("design must have n >= 1 rows and p >= 1 columns");
        }
        check_len("responses", x.nrows(), y.len())?;
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite entries");
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `Y - X beta - sqrt(n) theta`.
    pub fn residual(&self, beta: &[f64], theta: &[f64]) -> Vec<f64> {
        let sn = (self.n() as f64).sqrt();
        let mut r: Vec<f64> = self
            .y
            .iter()
            .zip(theta)
            .map(|(y, t)| y - sn * t)
            .collect();
        for (j, &bj) in beta.iter().enumerate() {
            if bj != 0.0 {
                for (ri, xij) in r.iter_mut().zip(self.x.column(j).iter()) {
                    *ri -= bj * xij;
                }
            }
        }
        r
    }

    /// `Q(beta, theta) = ||Y - X beta - sqrt(n) theta||^2 / (2n)`.
    pub fn q(&self, beta: &[f64], theta: &[f64]) -> f64 {
        norm2_sq(&self.residual(beta, theta)) / (2.0 * self.n() as f64)
    }

    fn check(&self, beta: &[f64], theta: &[f64]) -> Result<()> {
        check_len("beta", self.p(), beta.len())?;
        check_len("theta", self.n(), theta.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Relative decrease of the objective below which the outer loop stops.
    pub rel_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Lower clamp for the noise level, relative to the initial residual scale
    /// `sqrt(2 Q(0, 0))`.
    pub sigma_floor: f64,
    /// Backtracking shrink factor; `1` disables backtracking.
    pub step_safety: f64,
    /// Restrict the coefficient block to a growing set of columns.
    pub working_set: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            max_outer: 100,
            max_inner: 2000,
            sigma_floor: 1e-10,
            step_safety: 0.5,
            working_set: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return invalid("rel_tol must be positive");
        }
        if !(self.sigma_floor > 0.0) {
            return invalid("sigma_floor must be positive");
        }
        if !(self.step_safety > 0.0 && self.step_safety <= 1.0) {
            return invalid("step_safety must lie in (0, 1]");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return invalid("iteration limits must be positive");
        }
        Ok(())
    }

    fn inner_tol(&self) -> f64 {
        (self.rel_tol * 1e-3).max(1e-14)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIter,
    DegenerateSigma,
}

impl std::fmt::Display for FitStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIter => "max_iter",
            FitStatus::DegenerateSigma => "degenerate_sigma",
        })
    }
}

/// First-order certificate. Positive dual gaps mean the candidate subgradient
/// leaves the dual ball; `alignment_residual` measures the failure of
/// `<g, beta> = ||beta||_lambda` (and the same for theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub beta_dual_gap: f64,
    pub theta_dual_gap: f64,
    pub alignment_residual: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.beta_dual_gap
            .max(self.theta_dual_gap)
            .max(self.alignment_residual)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub sigma_hat: f64,
    pub objective_trace: Vec<f64>,
    pub status: FitStatus,
    /// `None` when the residual vanished and the certificate is undefined.
    pub kkt: Option<KktReport>,
    pub inner_iterations: usize,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }
}

/// `sqrt(Q) + ||beta||_lambda + ||theta||_mu`.
pub fn objective_eval(
    ds: &Dataset,
    beta: &[f64],
    theta: &[f64],
    lam: &WeightSequence,
    mu: &WeightSequence,
) -> Result<f64> {
    ds.check(beta, theta)?;
    Ok(ds.q(beta, theta).sqrt() + norm_eval(beta, lam)? + norm_eval(theta, mu)?)
}

fn check_penalties(ds: &Dataset, lam: &WeightSequence, mu: Option<&WeightSequence>) -> Result<()> {
    check_len("lambda", ds.p(), lam.len())?;
    if let Some(mu) = mu {
        check_len("mu", ds.n(), mu.len())?;
    }
    Ok(())
}

/// Column subset of the design together with a cached operator-norm estimate.
struct WorkingSet {
    cols: Vec<usize>,
    all: bool,
    xw: DMatrix<f64>,
    /// Squared operator norm estimate of `[X_W, sqrt(n) I]` (or `X_W` alone).
    lip_base: f64,
    /// Frobenius bound on the same quantity.
    lip_cap: f64,
}

impl WorkingSet {
    fn new(ds: &Dataset, target: &[f64], with_theta: bool, cfg: &FitConfig) -> Self {
        let p = ds.p();
        if !cfg.working_set || p <= WORKING_SET_MIN_P {
            let cols: Vec<usize> = (0..p).collect();
            return Self::build(ds, cols, true, with_theta);
        }
        let corr = xt_times(ds, target);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| corr[j].abs().total_cmp(&corr[i].abs()));
        let mut cols = order[..WORKING_SET_INIT.min(p)].to_vec();
        cols.sort_unstable();
        let all = cols.len() == p;
        Self::build(ds, cols, all, with_theta)
    }

    fn build(ds: &Dataset, cols: Vec<usize>, all: bool, with_theta: bool) -> Self {
        let xw = if all {
            ds.x.clone()
        } else {
            ds.x.select_columns(cols.iter())
        };
        let mut lip_base = spectral_norm_sq(&xw, POWER_ITERS, POWER_TOL);
        let mut lip_cap = xw.norm_squared();
        if with_theta {
            lip_base += ds.n() as f64;
            lip_cap += ds.n() as f64;
        }
        Self {
            cols,
            all,
            xw,
            lip_base: lip_base.min(lip_cap),
            lip_cap,
        }
    }

    fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.cols.iter().map(|&j| full[j]).collect()
    }

    fn scatter(&self, part: &[f64], full: &mut [f64]) {
        full.fill(0.0);
        for (&j, &v) in self.cols.iter().zip(part) {
            full[j] = v;
        }
    }

    /// Adds the strongest off-set columns by `|grad|`.
    fn expand(&mut self, ds: &Dataset, grad: &[f64], with_theta: bool) {
        let mut in_set = vec![false; ds.p()];
        for &j in &self.cols {
            in_set[j] = true;
        }
        let mut candidates: Vec<usize> = (0..ds.p()).filter(|&j| !in_set[j]).collect();
        candidates.sort_by(|&i, &j| grad[j].abs().total_cmp(&grad[i].abs()));
        let add = self.cols.len().max(10).min(candidates.len());
        let mut cols = self.cols.clone();
        cols.extend_from_slice(&candidates[..add]);
        cols.sort_unstable();
        let all = cols.len() == ds.p();
        let prev_lip = self.lip_base;
        *self = Self::build(ds, cols, all, with_theta);
        self.lip_base = self.lip_base.max(prev_lip).min(self.lip_cap);
    }
}

fn xt_times(ds: &Dataset, r: &[f64]) -> Vec<f64> {
    (0..ds.p()).map(|j| dot(ds.x.column(j).as_slice(), r)).collect()
}

/// Solves `min Q/sigma + ||beta||_lam + ||theta||_mu` (or with theta frozen at
/// zero) on the working set, growing it until the full coefficient block is
/// dual feasible. Returns `X^T r` at the final point when it was computed over
/// all columns.
#[allow(clippy::too_many_arguments)]
fn solve_scaled(
    ds: &Dataset,
    target: &[f64],
    lam: &[f64],
    mu: Option<&[f64]>,
    sigma: f64,
    beta: &mut [f64],
    theta: &mut Vec<f64>,
    ws: &mut WorkingSet,
    cfg: &FitConfig,
) -> (usize, Option<Vec<f64>>) {
    let settings = engine::Settings {
        max_iter: cfg.max_inner,
        tol: cfg.inner_tol(),
        step_safety: cfg.step_safety,
    };
    let mut iterations = 0;
    loop {
        let lam_w = &lam[..ws.cols.len()];
        let mut b = ws.gather(beta);
        let prob = engine::Problem {
            xw: &ws.xw,
            target,
            sigma,
            lam: lam_w,
            mu,
            lip_cap: ws.lip_cap,
        };
        let out = engine::solve(&prob, &mut b, theta, &mut ws.lip_base, &settings);
        iterations += out.iterations;
        if !out.converged {
            log::debug!("inner solve stopped after {} iterations", out.iterations);
        }
        ws.scatter(&b, beta);
        if ws.all {
            return (iterations, None);
        }

        // dual feasibility of the full coefficient block
        let th_zero;
        let th: &[f64] = if mu.is_some() {
            theta
        } else {
            th_zero = vec![0.0; ds.n()];
            &th_zero
        };
        let r = residual_to(ds, target, beta, th);
        let xtr = xt_times(ds, &r);
        let scale = 1.0 / (ds.n() as f64 * sigma);
        let grad: Vec<f64> = xtr.iter().map(|v| v * scale).collect();
        let grad_w = ws.gather(&grad);
        let inside = dual_unchecked(&grad_w, lam_w);
        let full = dual_unchecked(&grad, lam);
        if full <= inside.max(1.0) * (1.0 + 1e-9) {
            return (iterations, Some(xtr));
        }
        ws.expand(ds, &grad, mu.is_some());
    }
}

fn residual_to(ds: &Dataset, target: &[f64], beta: &[f64], theta: &[f64]) -> Vec<f64> {
    let sn = (ds.n() as f64).sqrt();
    let mut r: Vec<f64> = target.iter().zip(theta).map(|(t, th)| t - sn * th).collect();
    for (j, &bj) in beta.iter().enumerate() {
        if bj != 0.0 {
            for (ri, xij) in r.iter_mut().zip(ds.x.column(j).iter()) {
                *ri -= bj * xij;
            }
        }
    }
    r
}

/// Inner problem at fixed `sigma`: `min Q/sigma + sigma + ||beta||_lam + ||theta||_mu`.
pub fn fit_weighted_slope(
    ds: &Dataset,
    lam: &WeightSequence,
    mu: &WeightSequence,
    sigma: f64,
    cfg: &FitConfig,
    warm: Option<(&[f64], &[f64])>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_penalties(ds, lam, Some(mu))?;
    cfg.validate()?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    let (mut beta, mut theta) = match warm {
        Some((b, t)) => {
            ds.check(b, t)?;
            (b.to_vec(), t.to_vec())
        }
        None => (vec![0.0; ds.p()], vec![0.0; ds.n()]),
    };
    let target: Vec<f64> = ds.y.iter().copied().collect();
    let mut ws = WorkingSet::new(ds, &target, true, cfg);
    // warm-start support must be inside the working set
    if !ws.all && beta.iter().enumerate().any(|(j, &b)| b != 0.0 && !ws.cols.contains(&j)) {
        ws = WorkingSet::build(ds, (0..ds.p()).collect(), true, true);
    }
    solve_scaled(
        ds,
        &target,
        lam.as_slice(),
        Some(mu.as_slice()),
        sigma,
        &mut beta,
        &mut theta,
        &mut ws,
        cfg,
    );
    Ok((beta, theta))
}

/// The pivotal estimator: joint minimizer of `L(beta, theta)`.
pub fn fit_pivotal(
    ds: &Dataset,
    lam: &WeightSequence,
    mu: &WeightSequence,
    cfg: &FitConfig,
) -> Result<FitResult> {
    check_penalties(ds, lam, Some(mu))?;
    cfg.validate()?;
    if !crate::penalties::check_lambda_mu_compat(lam, mu) {
        log::warn!("lambda exceeds mu for some index; error bounds assume lambda_i <= mu_i");
    }
    fit_alternating(ds, lam, Some(mu), cfg)
}

/// Square-root SLOPE without the outlier block (`theta = 0`).
pub fn fit_nonrobust_baseline(
    ds: &Dataset,
    lam: &WeightSequence,
    cfg: &FitConfig,
) -> Result<FitResult> {
    check_penalties(ds, lam, None)?;
    cfg.validate()?;
    fit_alternating(ds, lam, None, cfg)
}

fn fit_alternating(
    ds: &Dataset,
    lam: &WeightSequence,
    mu: Option<&WeightSequence>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let n = ds.n();
    let p = ds.p();
    let nf = n as f64;
    let target: Vec<f64> = ds.y.iter().copied().collect();
    let lam_s: Vec<f64> = lam.as_slice().iter().map(|l| l * std::f64::consts::SQRT_2).collect();
    let mu_s: Option<Vec<f64>> =
        mu.map(|m| m.as_slice().iter().map(|v| v * std::f64::consts::SQRT_2).collect());

    let mut beta = vec![0.0; p];
    let mut theta = vec![0.0; n];
    let sigma0 = (norm2_sq(&target) / nf).sqrt();
    let floor = cfg.sigma_floor * sigma0;
    let pivotal_objective = |beta: &[f64], theta: &[f64], q: f64| {
        let mut v = q.sqrt() + norm_unchecked(beta, lam.as_slice());
        if let Some(mu) = mu {
            v += norm_unchecked(theta, mu.as_slice());
        }
        v
    };
    let mut trace = vec![pivotal_objective(&beta, &theta, sigma0 * sigma0 / 2.0)];

    if sigma0 == 0.0 {
        return Ok(FitResult {
            beta_hat: beta,
            theta_hat: theta,
            sigma_hat: f64::MIN_POSITIVE,
            objective_trace: trace,
            status: FitStatus::DegenerateSigma,
            kkt: None,
            inner_iterations: 0,
        });
    }

    let mut ws = WorkingSet::new(ds, &target, mu.is_some(), cfg);
    let mut sigma = sigma0;
    let mut status = FitStatus::MaxIter;
    let mut kkt = None;
    let mut inner_total = 0;
    // consecutive plain updates (sigma, sqrt(2Q)) since the last extrapolation
    let mut plain: Vec<(f64, f64)> = Vec::new();
    let mut fallback: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    for _ in 0..cfg.max_outer {
        let (iters, xtr) = solve_scaled(
            ds,
            &target,
            &lam_s,
            mu_s.as_deref(),
            sigma,
            &mut beta,
            &mut theta,
            &mut ws,
            cfg,
        );
        inner_total += iters;
        let r = residual_to(ds, &target, &beta, &theta);
        let q = norm2_sq(&r) / (2.0 * nf);
        let value = pivotal_objective(&beta, &theta, q);
        let prev = *trace.last().unwrap();
        if let Some((b, t, sigma_plain)) = fallback.take() {
            if value > prev {
                beta = b;
                theta = t;
                sigma = sigma_plain;
                continue;
            }
        }
        trace.push(value);

        let sigma_new = (2.0 * q).sqrt();
        if sigma_new < floor {
            status = FitStatus::DegenerateSigma;
            kkt = None;
            break;
        }
        let xtr = xtr.unwrap_or_else(|| xt_times(ds, &r));
        let report = certificate(ds, &beta, &theta, &r, &xtr, lam, mu);
        kkt = Some(report);
        let decrease = (prev - value) / prev;
        let step = (sigma_new - sigma).abs() / sigma;
        if decrease < cfg.rel_tol && step < cfg.rel_tol && report.within(KKT_TOL) {
            status = FitStatus::Converged;
            break;
        }
        plain.push((sigma, sigma_new));
        sigma = sigma_new;
        if let [.., (a, b), (_, c)] = plain[..] {
            let ratio = (c - b) / (b - a);
            // Aitken extrapolation, only once the iteration is in its linear regime
            if ratio > 0.0 && ratio < 1.0 && step < 1e-2 {
                let jump = (c + (c - b) * ratio / (1.0 - ratio)).clamp(0.5 * c, 2.0 * c);
                if jump > floor {
                    fallback = Some((beta.clone(), theta.clone(), c));
                    sigma = jump;
                }
            }
            plain.clear();
        }
    }

    let q = ds.q(&beta, &theta);
    let sigma_hat = if status == FitStatus::DegenerateSigma {
        (2.0 * q).sqrt().max(floor)
    } else {
        (2.0 * q).sqrt()
    };
    Ok(FitResult {
        beta_hat: beta,
        theta_hat: theta,
        sigma_hat,
        objective_trace: trace,
        status,
        kkt,
        inner_iterations: inner_total,
    })
}

fn certificate(
    ds: &Dataset,
    beta: &[f64],
    theta: &[f64],
    r: &[f64],
    xtr: &[f64],
    lam: &WeightSequence,
    mu: Option<&WeightSequence>,
) -> KktReport {
    let nf = ds.n() as f64;
    let root_q = (norm2_sq(r) / (2.0 * nf)).sqrt();
    let denom = 2.0 * root_q;
    let g_beta: Vec<f64> = xtr.iter().map(|v| v / nf / denom).collect();
    let beta_dual_gap = dual_unchecked(&g_beta, lam.as_slice()) - 1.0;
    let mut alignment =
        (dot(&g_beta, beta) - norm_unchecked(beta, lam.as_slice())).abs();
    let theta_dual_gap = match mu {
        Some(mu) => {
            let g_theta: Vec<f64> = r.iter().map(|v| v / nf.sqrt() / denom).collect();
            alignment += (dot(&g_theta, theta) - norm_unchecked(theta, mu.as_slice())).abs();
            dual_unchecked(&g_theta, mu.as_slice()) - 1.0
        }
        // theta is pinned at zero, which corresponds to an infinite penalty
        None => -1.0,
    };
    KktReport {
        beta_dual_gap,
        theta_dual_gap,
        alignment_residual: alignment,
    }
}

/// Recomputes the certificate of `fr` against the full problem.
pub fn kkt_residual(
    ds: &Dataset,
    fr: &FitResult,
    lam: &WeightSequence,
    mu: &WeightSequence,
) -> Result<KktReport> {
    check_penalties(ds, lam, Some(mu))?;
    ds.check(&fr.beta_hat, &fr.theta_hat)?;
    if lam.first() <= 0.0 || mu.first() <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let r = ds.residual(&fr.beta_hat, &fr.theta_hat);
    if norm2_sq(&r) == 0.0 {
        return Err(Error::Degenerate(
            "residual is zero; the certificate is undefined".into(),
        ));
    }
    let xtr = xt_times(ds, &r);
    Ok(certificate(ds, &fr.beta_hat, &fr.theta_hat, &r, &xtr, lam, Some(mu)))
}

#[cfg(test)]
mod tests;
