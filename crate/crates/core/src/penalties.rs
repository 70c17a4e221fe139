//! Penalty sequences for the coefficient block (`lambda`) and the outlier
//! block (`mu`).
//!
//! The leading constants are only fixed up to order by the theory, so they are
//! configuration (`c_lambda`, `c_mu`). Logarithms are natural.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sorted_l1::WeightSequence;

pub const DEFAULT_C_LAMBDA: f64 = 2.0;
pub const DEFAULT_C_MU: f64 = 2.0;

/// Moment exponent of the noise. `Infinite` stands for sub-Gaussian tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    Finite(f64),
    Infinite,
}

impl Tau {
    pub fn is_finite(self) -> bool {
        matches!(self, Tau::Finite(_))
    }

    pub fn value(self) -> f64 {
        match self {
            Tau::Finite(t) => t,
            Tau::Infinite => f64::INFINITY,
        }
    }

    /// Exponent `1/tau`, zero for sub-Gaussian.
    pub fn inverse(self) -> f64 {
        match self {
            Tau::Finite(t) => 1.0 / t,
            Tau::Infinite => 0.0,
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            Tau::Finite(t) if !(t >= 2.0) || !t.is_finite() => {
                Err(Error::Config(format!("tau must be >= 2 or \"inf\", got {t}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tau::Finite(t) => write!(f, "{t}"),
            Tau::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Tau {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Tau::Infinite);
        }
        let t: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse tau from {s:?}")))?;
        let tau = if t.is_infinite() && t > 0.0 {
            Tau::Infinite
        } else {
            Tau::Finite(t)
        };
        tau.validate()?;
        Ok(tau)
    }
}

impl Serialize for Tau {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Tau::Finite(t) => s.serialize_f64(*t),
            Tau::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Tau {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let tau = match Raw::deserialize(d)? {
            Raw::Num(t) if t.is_infinite() && t > 0.0 => Tau::Infinite,
            Raw::Num(t) => Tau::Finite(t),
            Raw::Text(s) => return s.parse().map_err(serde::de::Error::custom),
        };
        tau.validate().map_err(serde::de::Error::custom)?;
        Ok(tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRegime {
    /// `mu_i = (C/sqrt n) (n/i)^(1/tau)`, finite tau.
    SortedHeavy,
    /// `mu_i = C sqrt(log(e n / i) / n)`.
    SortedSubgauss,
    /// Constant `mu_i = (C/sqrt n) (n / log(1/delta))^(1/tau)`.
    Fixed,
}

impl fmt::Display for MuRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MuRegime::SortedHeavy => "sorted_heavy",
            MuRegime::SortedSubgauss => "sorted_subgauss",
            MuRegime::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub c_lambda: f64,
    pub c_mu: f64,
    pub tau: Tau,
    pub delta: f64,
    pub regime: MuRegime,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            c_lambda: DEFAULT_C_LAMBDA,
            c_mu: DEFAULT_C_MU,
            tau: Tau::Infinite,
            delta: 0.01,
            regime: MuRegime::SortedSubgauss,
        }
    }
}

impl PenaltyConfig {
    /// Sorted penalties matched to the tail regime of `tau`.
    pub fn sorted(tau: Tau) -> Self {
        let regime = if tau.is_finite() {
            MuRegime::SortedHeavy
        } else {
            MuRegime::SortedSubgauss
        };
        Self {
            tau,
            regime,
            ..Self::default()
        }
    }

    pub fn fixed(tau: Tau, delta: f64) -> Self {
        Self {
            tau,
            delta,
            regime: MuRegime::Fixed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_lambda > 0.0) || !self.c_lambda.is_finite() {
            return Err(Error::Config(format!("c_lambda must be positive, got {}", self.c_lambda)));
        }
        if !(self.c_mu > 0.0) || !self.c_mu.is_finite() {
            return Err(Error::Config(format!("c_mu must be positive, got {}", self.c_mu)));
        }
        self.tau.validate()?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        match (self.regime, self.tau) {
            (MuRegime::SortedSubgauss, Tau::Finite(t)) => Err(Error::Config(format!(
                "mu regime sorted_subgauss requires tau = inf, got {t}"
            ))),
            (MuRegime::SortedHeavy, Tau::Infinite) => Err(Error::Config(
                "mu regime sorted_heavy requires a finite tau".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// `lambda_i = c_lambda sqrt(log(e p / i) / n)`, `i = 1..p`.
pub fn build_lambda(n: usize, p: usize, cfg: &PenaltyConfig) -> Result<WeightSequence> {
    cfg.validate()?;
    if n == 0 || p == 0 {
        return Err(Error::InvalidArgument("n and p must be positive".into()));
    }
    WeightSequence::new(log_sequence(cfg.c_lambda, n, p))
}

fn log_sequence(c: f64, n: usize, len: usize) -> Vec<f64> {
    let nf = n as f64;
    let lf = len as f64;
    // 1 + ln(len / i) keeps the last entry exactly c / sqrt(n)
    (1..=len)
        .map(|i| c * ((1.0 + (lf / i as f64).ln()) / nf).sqrt())
        .collect()
}

pub fn build_mu(n: usize, cfg: &PenaltyConfig) -> Result<WeightSequence> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let nf = n as f64;
    let weights = match cfg.regime {
        MuRegime::SortedSubgauss => log_sequence(cfg.c_mu, n, n),
        MuRegime::SortedHeavy => {
            let inv = cfg.tau.inverse();
            (1..=n)
                .map(|i| cfg.c_mu / nf.sqrt() * (nf / i as f64).powf(inv))
                .collect()
        }
        MuRegime::Fixed => {
            let log_inv_delta = -cfg.delta.ln();
            if log_inv_delta > nf {
                return Err(Error::Config(format!(
                    "fixed mu needs log(1/delta) <= n, got log(1/delta) = {log_inv_delta} > n = {n}"
                )));
            }
            let value = cfg.c_mu / nf.sqrt() * (nf / log_inv_delta).powf(cfg.tau.inverse());
            vec![value; n]
        }
    };
    WeightSequence::new(weights)
}

/// Elementwise `lam_i <= mu_i` over the common prefix.
pub fn check_lambda_mu_compat(lam: &WeightSequence, mu: &WeightSequence) -> bool {
    lam.as_slice()
        .iter()
        .zip(mu.as_slice())
        .all(|(l, m)| l <= m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heavy(tau: f64, c: f64) -> PenaltyConfig {
        PenaltyConfig {
            c_mu: c,
            ..PenaltyConfig::sorted(Tau::Finite(tau))
        }
    }

    #[test]
    fn lambda_values() {
        let cfg = PenaltyConfig {
            c_lambda: 1.0,
            ..Default::default()
        };
        let lam = build_lambda(100, 200, &cfg).unwrap();
        assert!((lam.as_slice()[0] - ((1.0 + 200f64.ln()) / 100.0).sqrt()).abs() < 1e-15);
        assert!((lam.as_slice()[0] - 0.25096).abs() < 1e-5);
        assert_eq!(lam.as_slice()[199], 0.1);
        for w in lam.as_slice().windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn sequences_scale_linearly_in_the_constant() {
        let one = PenaltyConfig {
            c_lambda: 1.0,
            c_mu: 1.0,
            ..PenaltyConfig::sorted(Tau::Finite(3.0))
        };
        let two = PenaltyConfig {
            c_lambda: 2.0,
            c_mu: 2.0,
            ..one.clone()
        };
        let (l1, l2) = (build_lambda(50, 80, &one).unwrap(), build_lambda(50, 80, &two).unwrap());
        let (m1, m2) = (build_mu(50, &one).unwrap(), build_mu(50, &two).unwrap());
        for (a, b) in l1.as_slice().iter().zip(l2.as_slice()) {
            assert_eq!(2.0 * a, *b);
        }
        for (a, b) in m1.as_slice().iter().zip(m2.as_slice()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn mu_values() {
        let mu = build_mu(100, &heavy(2.0, 1.0)).unwrap();
        assert!((mu.as_slice()[3] - 0.5).abs() < 1e-15);

        let fixed = PenaltyConfig {
            c_mu: 1.0,
            ..PenaltyConfig::fixed(Tau::Finite(2.0), (-4.0f64).exp())
        };
        let mu = build_mu(100, &fixed).unwrap();
        assert!(mu.as_slice().iter().all(|m| (m - 0.5).abs() < 1e-12));

        let sub = PenaltyConfig {
            c_mu: 1.0,
            ..PenaltyConfig::sorted(Tau::Infinite)
        };
        assert_eq!(build_mu(100, &sub).unwrap().as_slice()[99], 0.1);
    }

    #[test]
    fn fixed_regime_rejects_tiny_delta() {
        let cfg = PenaltyConfig::fixed(Tau::Finite(2.0), (-20.0f64).exp());
        assert!(build_mu(10, &cfg).is_err());
        assert!(build_mu(20, &cfg).is_ok());
    }

    #[test]
    fn regime_and_tau_must_agree() {
        let mut cfg = PenaltyConfig::sorted(Tau::Infinite);
        cfg.regime = MuRegime::SortedHeavy;
        assert!(build_mu(10, &cfg).is_err());
        let mut cfg = PenaltyConfig::sorted(Tau::Finite(3.0));
        cfg.regime = MuRegime::SortedSubgauss;
        assert!(build_mu(10, &cfg).is_err());
        assert!("1.5".parse::<Tau>().is_err());
        assert_eq!("inf".parse::<Tau>().unwrap(), Tau::Infinite);
    }

    #[test]
    fn heavy_mu_approaches_constant_for_large_tau() {
        let mu = build_mu(100, &heavy(1e6, 2.0)).unwrap();
        let limit = 2.0 / 10.0;
        for &i in &[0usize, 9, 49, 99] {
            assert!((mu.as_slice()[i] - limit).abs() / limit < 1e-4);
        }
    }

    #[test]
    fn compatibility() {
        let lam = build_lambda(
            100,
            100,
            &PenaltyConfig {
                c_lambda: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let mu = build_mu(100, &heavy(2.0, 3.0)).unwrap();
        // elementwise scan done by hand: 3 (100/i)^(1/2)/10 >= sqrt(1 + ln(100/i))/10
        for (i, (l, m)) in lam.as_slice().iter().zip(mu.as_slice()).enumerate() {
            assert!(l <= m, "index {i}");
        }
        assert!(check_lambda_mu_compat(&lam, &mu));
        assert!(check_lambda_mu_compat(&lam, &lam));
        assert!(!check_lambda_mu_compat(&lam, &lam.scaled(0.5)));
    }

    #[test]
    fn built_sequences_validate() {
        for cfg in [
            heavy(2.0, 2.0),
            heavy(7.5, 0.3),
            PenaltyConfig::sorted(Tau::Infinite),
            PenaltyConfig::fixed(Tau::Finite(4.0), 0.05),
        ] {
            for n in [1usize, 2, 17, 300] {
                let mu = build_mu(n, &cfg);
                if let Ok(mu) = mu {
                    assert!(crate::sorted_l1::validate(mu.as_slice()).is_ok());
                }
                let lam = build_lambda(n, 3 * n, &cfg).unwrap();
                assert!(crate::sorted_l1::validate(lam.as_slice()).is_ok());
            }
        }
    }
}
