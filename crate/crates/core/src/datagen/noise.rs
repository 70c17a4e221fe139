use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::rademacher;
use crate::error::{invalid, Error, Result};
use crate::penalties::Tau;
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    /// Student t with `shape` degrees of freedom.
    StudentT,
    /// Random sign times a Pareto variable of scale 1 and tail index `shape`.
    SymmetricPareto,
    Rademacher,
    /// Law of the alternative instance in the two-point lower-bound pair; only
    /// produced by [`super::lower_bound_pair`].
    LowerBoundMixture,
}

/// A noise law standardized to zero mean and unit variance, together with the
/// moment exponent `tau` it is declared to satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub tau: Tau,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
}

impl NoiseSpec {
    pub fn gaussian() -> Self {
        Self {
            family: NoiseFamily::Gaussian,
            tau: Tau::Infinite,
            shape: None,
        }
    }

    pub fn rademacher() -> Self {
        Self {
            family: NoiseFamily::Rademacher,
            tau: Tau::Infinite,
            shape: None,
        }
    }

    /// Student t with `tau + 1` degrees of freedom.
    pub fn student_t(tau: f64) -> Self {
        Self {
            family: NoiseFamily::StudentT,
            tau: Tau::Finite(tau),
            shape: Some(tau + 1.0),
        }
    }

    /// Symmetric Pareto with tail index `tau + 1/2`.
    pub fn symmetric_pareto(tau: f64) -> Self {
        Self {
            family: NoiseFamily::SymmetricPareto,
            tau: Tau::Finite(tau),
            shape: Some(tau + 0.5),
        }
    }

    pub fn lower_bound_mixture(tau: Tau) -> Self {
        Self {
            family: NoiseFamily::LowerBoundMixture,
            tau,
            shape: None,
        }
    }

    fn shape(&self) -> Result<f64> {
        self.shape
            .ok_or_else(|| Error::InvalidArgument(format!("{:?} noise needs a shape", self.family)))
    }

    pub fn validate(&self) -> Result<()> {
        self.tau.validate()?;
        match self.family {
            NoiseFamily::StudentT => {
                let nu = self.shape()?;
                if !(nu > 2.0) {
                    return invalid(format!(
                        "student_t with {nu} degrees of freedom has infinite variance"
                    ));
                }
                if !self.tau.is_finite() || !(nu > self.tau.value()) {
                    return invalid(format!(
                        "student_t with {nu} degrees of freedom has no moment of order {}",
                        self.tau
                    ));
                }
            }
            NoiseFamily::SymmetricPareto => {
                let alpha = self.shape()?;
                if !(alpha > 2.0) {
                    return invalid(format!("pareto tail index {alpha} gives infinite variance"));
                }
                if !self.tau.is_finite() || !(alpha > self.tau.value()) {
                    return invalid(format!(
                        "pareto tail index {alpha} has no moment of order {}",
                        self.tau
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            NoiseFamily::Gaussian => f.write_str("gaussian"),
            NoiseFamily::Rademacher => f.write_str("rademacher"),
            NoiseFamily::StudentT => write!(f, "student_t:{}", self.tau),
            NoiseFamily::SymmetricPareto => write!(f, "symmetric_pareto:{}", self.tau),
            NoiseFamily::LowerBoundMixture => write!(f, "lower_bound_mixture:{}", self.tau),
        }
    }
}

/// Parses `gaussian`, `rademacher`, `student_t:<tau>` or
/// `symmetric_pareto:<tau>`.
impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a.trim(), Some(b.trim())),
            None => (s.trim(), None),
        };
        let tau = || -> Result<f64> {
            let a = arg.ok_or_else(|| {
                Error::InvalidArgument(format!("noise `{name}` needs a moment exponent, as in `{name}:4`"))
            })?;
            a.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad moment exponent `{a}`")))
        };
        let spec = match (name, arg) {
            ("gaussian", None) => Self::gaussian(),
            ("rademacher", None) => Self::rademacher(),
            ("student_t", _) => Self::student_t(tau()?),
            ("symmetric_pareto", _) => Self::symmetric_pareto(tau()?),
            _ => return invalid(format!("unknown noise `{s}`")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// I.i.d. draws standardized analytically to unit variance.
pub fn gen_noise(n: usize, spec: &NoiseSpec, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = stream_rng(seed, stream::NOISE);
    match spec.family {
        NoiseFamily::Gaussian => Ok((0..n).map(|_| rng.sample(StandardNormal)).collect()),
        NoiseFamily::Rademacher => Ok((0..n).map(|_| rademacher(&mut rng)).collect()),
        NoiseFamily::StudentT => {
            let nu = spec.shape()?;
            let dist = StudentT::new(nu).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let sd = (nu / (nu - 2.0)).sqrt();
            Ok((0..n).map(|_| dist.sample(&mut rng) / sd).collect())
        }
        NoiseFamily::SymmetricPareto => {
            let alpha = spec.shape()?;
            let dist = Pareto::new(1.0, alpha).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let sd = (alpha / (alpha - 2.0)).sqrt();
            Ok((0..n)
                .map(|_| {
                    let m: f64 = dist.sample(&mut rng);
                    rademacher(&mut rng) * m / sd
                })
                .collect())
        }
        NoiseFamily::LowerBoundMixture => {
            invalid("the lower-bound mixture is only drawn together with its paired instance")
        }
    }
}

/// Empirical `E[xi^2 1{|xi| <= threshold}]`.
pub fn small_ball_mass(xi: &[f64], threshold: f64) -> f64 {
    xi.iter()
        .filter(|v| v.abs() <= threshold)
        .map(|v| v * v)
        .sum::<f64>()
        / xi.len() as f64
}
