//! Monte-Carlo checks of the conditions behind the error bounds: the three
//! design inequalities, the restricted eigenvalue constant, the dominance cone
//! and the good noise event.
//!
//! The design checks quantify over all directions, so they are falsification
//! searches over structured probes. A non-negative margin is evidence, not a
//! certificate.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::Covariance;
use crate::error::{check_len, invalid, Result};
use crate::linalg::{dot, norm2, norm2_sq, sym_eigenvalues};
use crate::penalties::{build_lambda, PenaltyConfig};
use crate::rng::{stream, stream_rng};
use crate::sorted_l1::{norm_unchecked, WeightSequence};

pub const DEFAULT_PROPERTY_C_PRIME: f64 = 4.0;
pub const DEFAULT_EVENT_C_PRIME: f64 = 100.0;
pub const DEFAULT_CONE_C0: f64 = 4.0;
pub const DEFAULT_PROBES: usize = 10_000;
const MAX_PROBE_SPARSITY: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignCheckConfig {
    pub probes: usize,
    pub c_prime: f64,
    pub delta: f64,
    /// Sparsity used for the restricted eigenvalue estimate.
    pub s: usize,
}

impl Default for DesignCheckConfig {
    fn default() -> Self {
        Self {
            probes: DEFAULT_PROBES,
            c_prime: DEFAULT_PROPERTY_C_PRIME,
            delta: 0.01,
            s: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignCheckReport {
    pub property1_margin: f64,
    pub property2_margin: f64,
    pub property3_margin: f64,
    pub kappa_hat: f64,
    /// `lambda_min(Sigma)`, a lower bound on the restricted eigenvalue.
    pub lambda_min: f64,
    pub probes: usize,
    pub violated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseEventReport {
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub quantile_ok: bool,
    pub o_prime: usize,
}

impl NoiseEventReport {
    pub fn holds(&self) -> bool {
        self.lower_ok && self.upper_ok && self.quantile_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa_hat: f64,
    pub lambda_min: f64,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

fn sparse_vec(rng: &mut ChaCha8Rng, len: usize, s: usize) -> Vec<f64> {
    let mut u = vec![0.0; len];
    for j in index::sample(rng, len, s.min(len)) {
        u[j] = rng.sample(StandardNormal);
    }
    u
}

/// Sparse probes with sparsity cycling through `1..=min(len, 20)`, and every
/// `(k+1)`-th probe dense.
fn structured_probe(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<f64> {
    let levels = len.min(MAX_PROBE_SPARSITY);
    let slot = k % (levels + 1);
    if slot == levels {
        gaussian_vec(rng, len)
    } else {
        sparse_vec(rng, len, slot + 1)
    }
}

/// `X u / sqrt(n)` exploiting sparsity of `u`.
fn apply_scaled(x: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.nrows()];
    for (j, &uj) in u.iter().enumerate() {
        if uj != 0.0 {
            for (o, v) in out.iter_mut().zip(x.column(j).iter()) {
                *o += uj * v;
            }
        }
    }
    let s = 1.0 / (x.nrows() as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= s);
    out
}

fn xt_apply(x: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (0..x.ncols()).map(|j| dot(x.column(j).as_slice(), v)).collect()
}

fn sigma_norm(cov: &Covariance, u: &[f64]) -> f64 {
    cov.quad_form(u).max(0.0).sqrt()
}

fn check_shapes(x: &DMatrix<f64>, cov: &Covariance, lam: &WeightSequence) -> Result<()> {
    check_len("covariance", x.ncols(), cov.p())?;
    check_len("lambda", x.ncols(), lam.len())
}

fn property1_at(x: &DMatrix<f64>, cov: &Covariance, lam: &[f64], u: &[f64]) -> Option<f64> {
    let s = sigma_norm(cov, u);
    if s == 0.0 {
        return None;
    }
    let u: Vec<f64> = u.iter().map(|v| v / s).collect();
    let xu = apply_scaled(x, &u);
    let l = norm_unchecked(&u, lam);
    Some(norm2_sq(&xu) - 0.5 + 0.25 * l * l)
}

/// Minimum over probes of `||Xu||^2/n - ||u||_Sigma^2/2 + ||u||_lambda^2/4`
/// with `||u||_Sigma = 1`. Probes are random sparse and dense directions plus
/// the eigenvectors of `X^T X` with the smallest eigenvalues.
pub fn check_property1(
    x: &DMatrix<f64>,
    cov: &Covariance,
    lam: &WeightSequence,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    check_shapes(x, cov, lam)?;
    if probes == 0 {
        return invalid("at least one probe is required");
    }
    let p = x.ncols();
    let mut rng = stream_rng(seed, stream::PROBES);
    let mut margin = f64::INFINITY;
    for k in 0..probes {
        let u = structured_probe(&mut rng, p, k);
        if let Some(m) = property1_at(x, cov, lam.as_slice(), &u) {
            margin = margin.min(m);
        }
    }
    let gram = x.transpose() * x;
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    for &j in order.iter().take(p.min(10)) {
        let u: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        if let Some(m) = property1_at(x, cov, lam.as_slice(), &u) {
            margin = margin.min(m);
        }
    }
    Ok(margin)
}

fn deviation_term(c_prime: f64, delta: f64, n: usize) -> f64 {
    c_prime * (((1.0 / delta).ln() + 1.0) / n as f64).sqrt()
}

/// Penalty used for the `n`-dimensional vector `v`: the coefficient sequence
/// built for dimension `n`.
pub fn response_lambda(n: usize) -> Result<WeightSequence> {
    build_lambda(n, n, &PenaltyConfig::default())
}

/// Slack of `|v^T X u| / sqrt(n) <= ||u||_lam ||v||/10 + ||v||_lam_n ||u||_Sigma / 10
/// + C' sqrt((log(1/delta) + 1)/n) ||u||_Sigma ||v||` at one pair.
#[allow(clippy::too_many_arguments)]
fn property2_at(
    x: &DMatrix<f64>,
    cov: &Covariance,
    lam: &[f64],
    lam_n: &[f64],
    dev: f64,
    u: &[f64],
    v: &[f64],
) -> f64 {
    let us = sigma_norm(cov, u);
    let vn = norm2(v);
    let lhs = dot(v, &apply_scaled(x, u)).abs();
    let rhs = norm_unchecked(u, lam) * vn / 10.0 + norm_unchecked(v, lam_n) * us / 10.0 + dev * us * vn;
    rhs - lhs
}

/// Minimum slack of the two-sided incoherence inequality over probe pairs:
/// random sparse or dense `u` and `v`, and the best response `u = X^T v`.
#[allow(clippy::too_many_arguments)]
pub fn check_property2(
    x: &DMatrix<f64>,
    cov: &Covariance,
    lam: &WeightSequence,
    probes: usize,
    c_prime: f64,
    delta: f64,
    seed: u64,
) -> Result<f64> {
    check_shapes(x, cov, lam)?;
    if probes == 0 {
        return invalid("at least one probe is required");
    }
    let (n, p) = (x.nrows(), x.ncols());
    let lam_n = response_lambda(n)?;
    let dev = deviation_term(c_prime, delta, n);
    let mut rng = stream_rng(seed, stream::PROBES);
    let mut slack = f64::INFINITY;
    for k in 0..probes {
        let v = structured_probe(&mut rng, n, k / 2);
        let u = if k % 2 == 0 {
            structured_probe(&mut rng, p, k / 2)
        } else {
            xt_apply(x, &v)
        };
        let s = property2_at(x, cov, lam.as_slice(), lam_n.as_slice(), dev, &u, &v);
        slack = slack.min(normalize_slack(s, cov, &u, &v));
    }
    Ok(slack)
}

/// Slack of the one-sided inequality at a fixed `v`, over random `u`, the best
/// response `u = X^T v` and its largest-entry truncations.
#[allow(clippy::too_many_arguments)]
pub fn check_property3(
    x: &DMatrix<f64>,
    cov: &Covariance,
    lam: &WeightSequence,
    v: &[f64],
    probes: usize,
    c_prime: f64,
    delta: f64,
    seed: u64,
) -> Result<f64> {
    check_shapes(x, cov, lam)?;
    check_len("v", x.nrows(), v.len())?;
    if probes == 0 {
        return invalid("at least one probe is required");
    }
    let (n, p) = (x.nrows(), x.ncols());
    let dev = deviation_term(c_prime, delta, n);
    let zeros = vec![0.0; n];
    let eval = |u: &[f64]| {
        let s = property2_at(x, cov, lam.as_slice(), &zeros, dev, u, v);
        normalize_slack(s, cov, u, v)
    };
    let mut rng = stream_rng(seed, stream::PROBES);
    let mut slack = f64::INFINITY;
    for k in 0..probes {
        slack = slack.min(eval(&structured_probe(&mut rng, p, k)));
    }
    let best = xt_apply(x, v);
    slack = slack.min(eval(&best));
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| best[b].abs().total_cmp(&best[a].abs()));
    for k in 1..=p.min(MAX_PROBE_SPARSITY) {
        let mut u = vec![0.0; p];
        for &j in &order[..k] {
            u[j] = best[j];
        }
        slack = slack.min(eval(&u));
    }
    Ok(slack)
}

/// Slack per unit `||u||_Sigma ||v||`; zero vectors give the (zero) raw value.
fn normalize_slack(s: f64, cov: &Covariance, u: &[f64], v: &[f64]) -> f64 {
    let scale = sigma_norm(cov, u) * norm2(v);
    if scale > 0.0 {
        s / scale
    } else {
        s
    }
}

fn binomial_at_most(p: usize, s: usize, cap: usize) -> bool {
    let mut c: u128 = 1;
    for i in 0..s as u128 {
        c = c * (p as u128 - i) / (i + 1);
        if c > cap as u128 {
            return false;
        }
    }
    true
}

fn for_each_subset(p: usize, s: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        f(&idx);
        let mut i = s;
        while i > 0 && idx[i - 1] == p - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Estimate of the restricted eigenvalue `kappa(s)`: the smallest Rayleigh
/// quotient of `Sigma` over probes inside the cone `C(s, 4)`. Probes are all
/// `s`-subsets (through `lambda_min(Sigma_SS)`) when there are at most
/// `probes` of them, random subsets otherwise, plus random sparse vectors and
/// sparse-plus-dense mixtures pushed to the cone boundary.
pub fn estimate_kappa(
    cov: &Covariance,
    lam: &WeightSequence,
    s: usize,
    probes: usize,
    seed: u64,
) -> Result<KappaEstimate> {
    let p = cov.p();
    check_len("lambda", p, lam.len())?;
    if s == 0 || s > p {
        return invalid(format!("sparsity {s} outside 1..={p}"));
    }
    let dense = match cov {
        Covariance::Identity(_) => {
            return Ok(KappaEstimate {
                kappa_hat: 1.0,
                lambda_min: 1.0,
            })
        }
        Covariance::Dense(m) => m,
    };
    let lambda_min = sym_eigenvalues(dense)[0];
    let sub_min = |cols: &[usize]| {
        let sub = DMatrix::from_fn(cols.len(), cols.len(), |i, j| dense[(cols[i], cols[j])]);
        sym_eigenvalues(&sub)[0]
    };
    let mut kappa = f64::INFINITY;
    let mut rng = stream_rng(seed, stream::PROBES);
    if binomial_at_most(p, s, probes.max(1)) {
        for_each_subset(p, s, |cols| kappa = kappa.min(sub_min(cols)));
    } else {
        for _ in 0..probes {
            let mut cols = index::sample(&mut rng, p, s).into_vec();
            cols.sort_unstable();
            kappa = kappa.min(sub_min(&cols));
        }
    }
    let rayleigh = |u: &[f64]| cov.quad_form(u) / norm2_sq(u);
    let radius = 4.0 * lam.prefix_sq_sum(s).sqrt();
    let in_cone = |u: &[f64]| norm_unchecked(u, lam.as_slice()) <= radius * norm2(u);
    for _ in 0..probes {
        let head = sparse_vec(&mut rng, p, s);
        if norm2_sq(&head) == 0.0 {
            continue;
        }
        kappa = kappa.min(rayleigh(&head));
        let tail = gaussian_vec(&mut rng, p);
        let mix = |t: f64| -> Vec<f64> { head.iter().zip(&tail).map(|(h, d)| h + t * d).collect() };
        let (mut lo, mut hi) = (0.0, 1.0);
        while in_cone(&mix(hi)) && hi < 1e6 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if in_cone(&mix(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u = mix(lo);
        if in_cone(&u) {
            kappa = kappa.min(rayleigh(&u));
        }
    }
    Ok(KappaEstimate {
        kappa_hat: kappa,
        lambda_min,
    })
}

/// Runs the three design checks and the restricted eigenvalue estimate. The
/// fixed `v` of the one-sided check is a random unit vector.
pub fn check_design(
    x: &DMatrix<f64>,
    cov: &Covariance,
    lam: &WeightSequence,
    cfg: &DesignCheckConfig,
    seed: u64,
) -> Result<DesignCheckReport> {
    let p1 = check_property1(x, cov, lam, cfg.probes, seed)?;
    let p2 = check_property2(x, cov, lam, cfg.probes, cfg.c_prime, cfg.delta, seed)?;
    let v = random_unit(x.nrows(), seed ^ 0x5eed);
    let p3 = check_property3(x, cov, lam, &v, cfg.probes, cfg.c_prime, cfg.delta, seed)?;
    let kappa = estimate_kappa(cov, lam, cfg.s.min(cov.p()), cfg.probes, seed)?;
    Ok(DesignCheckReport {
        property1_margin: p1,
        property2_margin: p2,
        property3_margin: p3,
        kappa_hat: kappa.kappa_hat,
        lambda_min: kappa.lambda_min,
        probes: cfg.probes,
        violated: p1 < 0.0 || p2 < 0.0 || p3 < 0.0,
    })
}

/// `|xi|` sorted in decreasing order.
fn sorted_abs(xi: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = xi.iter().map(|v| v.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    a
}

/// Zero-based start of the 1-based range `j >= o`.
fn tail_start(o: usize) -> usize {
    o.max(1) - 1
}

/// `xi_(j)^2 <= level^2 n mu_j^2` for all 1-based `j >= o`.
pub fn quantile_condition(xi: &[f64], o: usize, mu: &WeightSequence, level: f64) -> bool {
    let n = xi.len() as f64;
    let a = sorted_abs(xi);
    (tail_start(o)..a.len()).all(|j| a[j] <= level * n.sqrt() * mu.as_slice()[j])
}

/// `lo <= sum_{j >= o} xi_(j)^2 <= hi`.
pub fn variance_window(xi: &[f64], o: usize, lo: f64, hi: f64) -> bool {
    let a = sorted_abs(xi);
    let tail: f64 = a.iter().skip(tail_start(o)).map(|v| v * v).sum();
    lo <= tail && tail <= hi
}

/// Indicators of the good noise event at truncation level `o_prime`.
pub fn check_event_e(
    xi: &[f64],
    o_prime: usize,
    mu: &WeightSequence,
    c_prime: f64,
) -> Result<NoiseEventReport> {
    check_len("mu", xi.len(), mu.len())?;
    let n = xi.len() as f64;
    let a = sorted_abs(xi);
    let tail: f64 = a.iter().skip(tail_start(o_prime)).map(|v| v * v).sum();
    Ok(NoiseEventReport {
        lower_ok: n / c_prime <= tail,
        upper_ok: tail <= c_prime * n,
        quantile_ok: quantile_condition(xi, o_prime, mu, 1.0),
        o_prime,
    })
}

/// `max_{i >= o} |xi|_(i) / (sqrt(n) mu_i) < 1/20`.
pub fn check_order_stat_bound(xi: &[f64], o: usize, mu: &WeightSequence) -> Result<bool> {
    check_len("mu", xi.len(), mu.len())?;
    let n = xi.len() as f64;
    let a = sorted_abs(xi);
    let worst = (tail_start(o)..a.len())
        .map(|j| a[j] / (n.sqrt() * mu.as_slice()[j]))
        .fold(0.0, f64::max);
    Ok(worst < 1.0 / 20.0)
}

/// `n/100 <= sum_{i >= o} xi_(i)^2 <= 2n`.
pub fn check_variance_window(xi: &[f64], o: usize) -> bool {
    let n = xi.len() as f64;
    variance_window(xi, o, n / 100.0, 2.0 * n)
}

/// `max_i |xi|_(i) / sqrt(log(e n / i))`.
pub fn max_ratio_statistic(xi: &[f64]) -> f64 {
    let n = xi.len() as f64;
    sorted_abs(xi)
        .iter()
        .enumerate()
        .map(|(i, v)| v / (1.0 + (n / (i + 1) as f64).ln()).sqrt())
        .fold(0.0, f64::max)
}

/// Truncation level `o + ceil(log(1/delta))`, capped at `n`.
pub fn o_prime(o: usize, delta: f64, n: usize) -> usize {
    (o + (1.0 / delta).ln().ceil() as usize).min(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub s: usize,
    pub o: usize,
    pub delta: f64,
    pub kappa: f64,
    pub c0: f64,
}

/// Left and right sides of the augmented dominance cone inequality
/// `||u||_lam + ||v||_mu <= c0 (sqrt(sum_{i<=s} lam_i^2/kappa + log(1/delta)/n) ||u||_Sigma
/// + sqrt(sum_{i<=o} mu_i^2) ||v||)`.
pub fn cone_sides(
    u: &[f64],
    v: &[f64],
    cov: &Covariance,
    lam: &WeightSequence,
    mu: &WeightSequence,
    params: &ConeParams,
) -> Result<(f64, f64)> {
    check_len("u", lam.len(), u.len())?;
    check_len("v", mu.len(), v.len())?;
    check_len("covariance", u.len(), cov.p())?;
    if !(params.kappa > 0.0) {
        return invalid("kappa must be positive");
    }
    let n = v.len() as f64;
    let lhs = norm_unchecked(u, lam.as_slice()) + norm_unchecked(v, mu.as_slice());
    let a = (lam.prefix_sq_sum(params.s) / params.kappa + (1.0 / params.delta).ln() / n).sqrt();
    let b = mu.prefix_sq_sum(params.o).sqrt();
    let rhs = params.c0 * (a * sigma_norm(cov, u) + b * norm2(v));
    Ok((lhs, rhs))
}

pub fn cone_membership(
    u: &[f64],
    v: &[f64],
    cov: &Covariance,
    lam: &WeightSequence,
    mu: &WeightSequence,
    params: &ConeParams,
) -> Result<bool> {
    let (lhs, rhs) = cone_sides(u, v, cov, lam, mu, params)?;
    Ok(lhs <= rhs)
}

/// Random unit vector, used as the fixed `v` of the one-sided check.
pub fn random_unit(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream::PROBES);
    let v = DVector::from_vec(gaussian_vec(&mut rng, len));
    (v.clone() / v.norm()).iter().copied().collect()
}
