//! Simulation of `Y = X beta* + sqrt(n) theta* + sigma xi`: designs with
//! sub-Gaussian rows, unit-variance noise families, sparse signals and
//! adversarial response contamination.

mod contaminate;
mod io;
mod noise;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::sym_sqrt;
use crate::rng::{stream, stream_rng};
use crate::solver::Dataset;

pub use contaminate::{contaminate, lower_bound_pair, AdversaryStrategy};
pub use io::{read_instance, write_instance};
pub use noise::{gen_noise, small_ball_mass, NoiseFamily, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKind {
    Identity,
    Ar1 { rho: f64 },
}

/// Population covariance of the design rows. The identity is kept implicit so
/// wide designs do not allocate a `p x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Identity(usize),
    Dense(DMatrix<f64>),
}

impl Covariance {
    pub fn p(&self) -> usize {
        match self {
            Covariance::Identity(p) => *p,
            Covariance::Dense(m) => m.nrows(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Covariance::Identity(p) => DMatrix::identity(*p, *p),
            Covariance::Dense(m) => m.clone(),
        }
    }

    /// `u^T Sigma u`.
    pub fn quad_form(&self, u: &[f64]) -> f64 {
        match self {
            Covariance::Identity(_) => u.iter().map(|v| v * v).sum(),
            Covariance::Dense(m) => {
                let v = DVector::from_column_slice(u);
                v.dot(&(m * &v))
            }
        }
    }

    pub fn diagonal_bounded(&self) -> bool {
        match self {
            Covariance::Identity(_) => true,
            Covariance::Dense(m) => m.diagonal().iter().all(|&d| d <= 1.0 + 1e-12),
        }
    }
}

pub fn gen_covariance(p: usize, kind: CovarianceKind) -> Result<Covariance> {
    if p == 0 {
        return invalid("covariance dimension must be positive");
    }
    match kind {
        CovarianceKind::Identity => Ok(Covariance::Identity(p)),
        CovarianceKind::Ar1 { rho } => {
            if !(rho.abs() < 1.0) {
                return invalid(format!("ar1 correlation must satisfy |rho| < 1, got {rho}"));
            }
            Ok(Covariance::Dense(DMatrix::from_fn(p, p, |i, j| {
                rho.powi(i.abs_diff(j) as i32)
            })))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFamily {
    Gaussian,
    Rademacher,
}

/// Rows `Sigma^(1/2) z` with `z` isotropic of the given family.
pub fn gen_design(
    n: usize,
    p: usize,
    cov: &Covariance,
    family: RowFamily,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if cov.p() != p {
        return invalid(format!("covariance is {0}x{0}, design has {p} columns", cov.p()));
    }
    let root = match cov {
        Covariance::Identity(_) => None,
        Covariance::Dense(m) => Some(sym_sqrt(m)?),
    };
    let mut rng = stream_rng(seed, stream::DESIGN);
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = match family {
                RowFamily::Gaussian => rng.sample(StandardNormal),
                RowFamily::Rademacher => rademacher(&mut rng),
            };
        }
    }
    Ok(match root {
        None => z,
        Some(r) => z * r,
    })
}

pub(crate) fn rademacher(rng: &mut impl Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPattern {
    Flat,
    Decaying,
}

/// `s`-sparse signal on a random support with random signs; the `k`-th largest
/// magnitude is `magnitude` (flat) or `magnitude / k` (decaying).
pub fn gen_beta(
    p: usize,
    s: usize,
    magnitude: f64,
    pattern: SignalPattern,
    seed: u64,
) -> Result<Vec<f64>> {
    if s > p {
        return invalid(format!("sparsity s = {s} exceeds p = {p}"));
    }
    let mut rng = stream_rng(seed, stream::SIGNAL);
    let mut beta = vec![0.0; p];
    for (k, j) in index::sample(&mut rng, p, s).into_iter().enumerate() {
        let m = match pattern {
            SignalPattern::Flat => magnitude,
            SignalPattern::Decaying => magnitude / (k + 1) as f64,
        };
        beta[j] = m * rademacher(&mut rng);
    }
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta_star: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub sigma: f64,
    pub cov: Covariance,
    pub noise: NoiseSpec,
    pub support_s: Vec<usize>,
    pub support_o: Vec<usize>,
}

impl GroundTruth {
    pub fn s(&self) -> usize {
        self.support_s.len()
    }

    pub fn o(&self) -> usize {
        self.support_o.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInstance {
    pub ds: Dataset,
    pub truth: GroundTruth,
    pub seed: u64,
    pub xi: Vec<f64>,
}

pub(crate) fn support(v: &[f64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// `X beta + sqrt(n) theta + sigma xi`, accumulated column by column in a
/// fixed order so that the identity can be re-checked bit for bit.
pub fn compose_response(
    x: &DMatrix<f64>,
    beta: &[f64],
    theta: &[f64],
    sigma: f64,
    xi: &[f64],
) -> DVector<f64> {
    let n = x.nrows();
    let sn = (n as f64).sqrt();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                acc += x[(i, j)] * b;
            }
        }
        y[i] = acc + sn * theta[i] + sigma * xi[i];
    }
    y
}

impl RegressionInstance {
    /// Re-evaluates the model identity; true when `Y` matches bit for bit.
    pub fn reconstruction_holds(&self) -> bool {
        let y = compose_response(
            &self.ds.x,
            &self.truth.beta_star,
            &self.truth.theta_star,
            self.truth.sigma,
            &self.xi,
        );
        y.iter().zip(self.ds.y.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn n(&self) -> usize {
        self.ds.n()
    }

    pub fn p(&self) -> usize {
        self.ds.p()
    }
}

/// Everything needed to draw an uncontaminated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub beta_magnitude: f64,
    pub pattern: SignalPattern,
    pub covariance: CovarianceKind,
    pub rows: RowFamily,
    pub sigma: f64,
    pub noise: NoiseSpec,
}

impl InstanceSpec {
    pub fn gaussian(n: usize, p: usize, s: usize) -> Self {
        Self {
            n,
            p,
            s,
            beta_magnitude: 1.0,
            pattern: SignalPattern::Flat,
            covariance: CovarianceKind::Identity,
            rows: RowFamily::Gaussian,
            sigma: 1.0,
            noise: NoiseSpec::gaussian(),
        }
    }
}

pub fn gen_instance(spec: &InstanceSpec, seed: u64) -> Result<RegressionInstance> {
    if spec.n == 0 || spec.p == 0 {
        return invalid("n and p must be positive");
    }
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return invalid("sigma must be finite and non-negative");
    }
    let cov = gen_covariance(spec.p, spec.covariance)?;
    let x = gen_design(spec.n, spec.p, &cov, spec.rows, seed)?;
    let beta = gen_beta(spec.p, spec.s, spec.beta_magnitude, spec.pattern, seed)?;
    let xi = gen_noise(spec.n, &spec.noise, seed)?;
    let theta = vec![0.0; spec.n];
    let y = compose_response(&x, &beta, &theta, spec.sigma, &xi);
    Ok(RegressionInstance {
        ds: Dataset::new(x, y)?,
        truth: GroundTruth {
            support_s: support(&beta),
            beta_star: beta,
            theta_star: theta,
            sigma: spec.sigma,
            cov,
            noise: spec.noise.clone(),
            support_o: Vec::new(),
        },
        seed,
        xi,
    })
}
