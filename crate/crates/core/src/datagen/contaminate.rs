use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::NoiseSpec;
use super::{compose_response, rademacher, support, Covariance, GroundTruth, RegressionInstance};
use crate::error::{invalid, Error, Result};
use crate::penalties::Tau;
use crate::rng::{stream, stream_rng};
use crate::solver::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryStrategy {
    /// Random support, entries `+-magnitude`.
    RandomLarge,
    /// Support on the `o` largest `|sigma xi_i|`, entries `magnitude * sign(xi_i)`.
    ResidualAligned,
    /// Random support of size `o`; outliers of size `sigma (o/n)^(-1/tau)`
    /// (times `magnitude`) pointing against the sign of the first design column,
    /// as in the two-point lower-bound construction.
    LowerBound,
}

impl fmt::Display for AdversaryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryStrategy::RandomLarge => "random_large",
            AdversaryStrategy::ResidualAligned => "residual_aligned",
            AdversaryStrategy::LowerBound => "lower_bound",
        })
    }
}

impl FromStr for AdversaryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random_large" => Ok(Self::RandomLarge),
            "residual_aligned" => Ok(Self::ResidualAligned),
            "lower_bound" => Ok(Self::LowerBound),
            other => invalid(format!("unknown contamination strategy `{other}`")),
        }
    }
}

/// Outlier scale `(o/n)^(-1/tau)`; for sub-Gaussian noise `sqrt(log(e n / o))`.
fn outlier_scale(o: usize, n: usize, tau: Tau) -> f64 {
    let frac = o as f64 / n as f64;
    match tau {
        Tau::Finite(t) => frac.powf(-1.0 / t),
        Tau::Infinite => (1.0 - frac.ln()).sqrt(),
    }
}

/// Replaces `theta*` by an `o`-sparse adversarial vector and rebuilds `Y`.
pub fn contaminate(
    inst: &RegressionInstance,
    strategy: AdversaryStrategy,
    o: usize,
    magnitude: f64,
) -> Result<RegressionInstance> {
    let n = inst.n();
    if o > n {
        return invalid(format!("o = {o} exceeds n = {n}"));
    }
    if !magnitude.is_finite() {
        return invalid("contamination magnitude must be finite");
    }
    if o == 0 {
        return Ok(inst.clone());
    }
    let mut rng = stream_rng(inst.seed, stream::CONTAMINATION);
    let sigma = inst.truth.sigma;
    let mut theta = vec![0.0; n];
    match strategy {
        AdversaryStrategy::RandomLarge => {
            for i in index::sample(&mut rng, n, o) {
                theta[i] = magnitude * rademacher(&mut rng);
            }
        }
        AdversaryStrategy::ResidualAligned => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                (sigma * inst.xi[b])
                    .abs()
                    .total_cmp(&(sigma * inst.xi[a]).abs())
                    .then(a.cmp(&b))
            });
            for &i in &order[..o] {
                let sign = if inst.xi[i] < 0.0 { -1.0 } else { 1.0 };
                theta[i] = magnitude * sign;
            }
        }
        AdversaryStrategy::LowerBound => {
            let size = magnitude * sigma * outlier_scale(o, n, inst.truth.noise.tau)
                / (n as f64).sqrt();
            for i in index::sample(&mut rng, n, o) {
                let v = if inst.ds.x[(i, 0)] < 0.0 { -1.0 } else { 1.0 };
                theta[i] = -size * v;
            }
        }
    }
    let y = compose_response(&inst.ds.x, &inst.truth.beta_star, &theta, sigma, &inst.xi);
    let mut out = inst.clone();
    out.ds = Dataset::new(inst.ds.x.clone(), y)?;
    out.truth.support_o = support(&theta);
    out.truth.theta_star = theta;
    Ok(out)
}

/// The two-point construction behind the contamination lower bound.
///
/// Both instances share the Rademacher design column `v`. The first has
/// `beta = sigma (o/n)^(1-1/tau)`, Bernoulli(`o/n`) outliers
/// `sqrt(n) theta_i = -sigma (o/n)^(-1/tau) alpha_i v_i` and Rademacher noise.
/// The second has no signal, no outliers and noise level
/// `sigma~ = sigma sqrt(1 + (o/n)^(1-2/tau) (1 - o/n))`, with standardized noise
/// built from independent copies of the same ingredients. Both response
/// vectors therefore have the same law.
pub fn lower_bound_pair(
    n: usize,
    o: usize,
    sigma: f64,
    tau: Tau,
    seed: u64,
) -> Result<(RegressionInstance, RegressionInstance)> {
    tau.validate()?;
    if o == 0 || o > n {
        return invalid(format!("lower-bound pair needs 1 <= o <= n, got o = {o}, n = {n}"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return invalid("sigma must be positive");
    }
    let nf = n as f64;
    let sn = nf.sqrt();
    let frac = o as f64 / nf;
    let scale = outlier_scale(o, n, tau);
    let beta = sigma * frac * scale;
    let sigma_alt = sigma * (1.0 + scale * scale * frac * (1.0 - frac)).sqrt();

    let mut design_rng = stream_rng(seed, stream::DESIGN);
    let v: Vec<f64> = (0..n).map(|_| rademacher(&mut design_rng)).collect();
    let x = DMatrix::from_column_slice(n, 1, &v);

    let mut alpha_rng = stream_rng(seed, stream::CONTAMINATION);
    let mut noise_rng = stream_rng(seed, stream::NOISE);
    let theta: Vec<f64> = v
        .iter()
        .map(|vi| {
            if alpha_rng.random_bool(frac) {
                -sigma * scale * vi / sn
            } else {
                0.0
            }
        })
        .collect();
    let xi: Vec<f64> = (0..n).map(|_| rademacher(&mut noise_rng)).collect();
    let y1 = compose_response(&x, &[beta], &theta, sigma, &xi);
    let first = RegressionInstance {
        ds: Dataset::new(x.clone(), y1)?,
        truth: GroundTruth {
            beta_star: vec![beta],
            support_s: vec![0],
            support_o: support(&theta),
            theta_star: theta,
            sigma,
            cov: Covariance::Identity(1),
            noise: NoiseSpec::rademacher(),
        },
        seed,
        xi,
    };

    let mut alt_alpha = stream_rng(seed, stream::ALT_CONTAMINATION);
    let mut alt_noise = stream_rng(seed, stream::ALT_NOISE);
    let zeta: Vec<f64> = (0..n)
        .map(|_| {
            let a = if alt_alpha.random_bool(frac) { 1.0 } else { 0.0 };
            let w = rademacher(&mut alt_alpha);
            let e = rademacher(&mut alt_noise);
            (-sigma * scale * (a - frac) * w + sigma * e) / sigma_alt
        })
        .collect();
    let zeros = vec![0.0; n];
    let y2 = compose_response(&x, &[0.0], &zeros, sigma_alt, &zeta);
    let second = RegressionInstance {
        ds: Dataset::new(x, y2)?,
        truth: GroundTruth {
            beta_star: vec![0.0],
            theta_star: zeros,
            sigma: sigma_alt,
            cov: Covariance::Identity(1),
            noise: NoiseSpec::lower_bound_mixture(tau),
            support_s: Vec::new(),
            support_o: Vec::new(),
        },
        seed,
        xi: zeta,
    };
    Ok((first, second))
}
