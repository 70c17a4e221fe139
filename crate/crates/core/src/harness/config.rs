//! Experiment configuration file.
//!
//! ```toml
//! schema_version = 1
//! master_seed = 42
//! replications = 200
//! max_failure_fraction = 0.1     # optional
//!
//! [penalty]                      # optional, defaults shown
//! c_lambda = 2.0
//! c_mu = 2.0
//! delta = 0.01
//! # tau = 4                      # defaults to the noise's declared exponent
//! # mu_regime = "sorted_heavy"   # defaults from tau
//!
//! [grid]
//! n = [200, 400]
//! p_factor = 2.0                 # or p = [...]
//! s = [10]
//! o_frac = [0.0, 0.05]           # or o = [...]
//! noise = ["gaussian", "student_t:4"]
//! strategy = ["random_large"]
//! magnitude = [10.0]
//! variant = ["pivotal_sorted", "nonrobust_baseline"]
//! sigma = 1.0
//! design = "gaussian"
//! covariance = { kind = "identity" }
//! beta_magnitude = 1.0
//! beta_pattern = "flat"
//!
//! [solver]                       # optional, any FitConfig field
//! max_outer = 100
//! ```

use serde::{Deserialize, Serialize};

use crate::datagen::{AdversaryStrategy, CovarianceKind, NoiseSpec, RowFamily, SignalPattern};
use crate::error::{Error, Result};
use crate::penalties::{MuRegime, PenaltyConfig, Tau, DEFAULT_C_LAMBDA, DEFAULT_C_MU};
use crate::solver::FitConfig;

use super::{Cell, Variant};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    pub replications: usize,
    #[serde(default = "default_failure_fraction")]
    pub max_failure_fraction: f64,
    #[serde(default)]
    pub penalty: PenaltySection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
}

fn default_failure_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    #[serde(default = "default_c_lambda")]
    pub c_lambda: f64,
    #[serde(default = "default_c_mu")]
    pub c_mu: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Tau>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_regime: Option<MuRegime>,
}

fn default_c_lambda() -> f64 {
    DEFAULT_C_LAMBDA
}

fn default_c_mu() -> f64 {
    DEFAULT_C_MU
}

fn default_delta() -> f64 {
    0.01
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self {
            c_lambda: DEFAULT_C_LAMBDA,
            c_mu: DEFAULT_C_MU,
            delta: default_delta(),
            tau: None,
            mu_regime: None,
        }
    }
}

impl PenaltySection {
    /// Penalty configuration for one estimator variant under the given noise.
    pub fn resolve(&self, variant: Variant, noise: &NoiseSpec) -> Result<PenaltyConfig> {
        let tau = self.tau.unwrap_or(noise.tau);
        let regime = match variant {
            Variant::PivotalFixed => MuRegime::Fixed,
            _ => self.mu_regime.unwrap_or(if tau.is_finite() {
                MuRegime::SortedHeavy
            } else {
                MuRegime::SortedSubgauss
            }),
        };
        if variant == Variant::PivotalSorted && regime == MuRegime::Fixed {
            return Err(Error::Config(
                "mu_regime = \"fixed\" conflicts with variant pivotal_sorted".into(),
            ));
        }
        let cfg = PenaltyConfig {
            c_lambda: self.c_lambda,
            c_mu: self.c_mu,
            tau,
            delta: self.delta,
            regime,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_factor: Option<f64>,
    pub s: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o_frac: Option<Vec<f64>>,
    #[serde(default = "default_noise")]
    pub noise: Vec<String>,
    #[serde(default = "default_strategy")]
    pub strategy: Vec<AdversaryStrategy>,
    #[serde(default = "default_magnitude")]
    pub magnitude: Vec<f64>,
    #[serde(default = "default_variant")]
    pub variant: Vec<Variant>,
    #[serde(default = "default_one")]
    pub sigma: f64,
    #[serde(default = "default_design")]
    pub design: RowFamily,
    #[serde(default = "default_covariance")]
    pub covariance: CovarianceKind,
    #[serde(default = "default_one")]
    pub beta_magnitude: f64,
    #[serde(default = "default_pattern")]
    pub beta_pattern: SignalPattern,
}

fn default_noise() -> Vec<String> {
    vec!["gaussian".into()]
}

fn default_strategy() -> Vec<AdversaryStrategy> {
    vec![AdversaryStrategy::RandomLarge]
}

fn default_magnitude() -> Vec<f64> {
    vec![10.0]
}

fn default_variant() -> Vec<Variant> {
    vec![Variant::PivotalSorted]
}

fn default_one() -> f64 {
    1.0
}

fn default_design() -> RowFamily {
    RowFamily::Gaussian
}

fn default_covariance() -> CovarianceKind {
    CovarianceKind::Identity
}

fn default_pattern() -> SignalPattern {
    SignalPattern::Flat
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_inner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_safety: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_set: Option<bool>,
}

impl SolverSection {
    pub fn resolve(&self) -> Result<FitConfig> {
        let d = FitConfig::default();
        let cfg = FitConfig {
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            max_inner: self.max_inner.unwrap_or(d.max_inner),
            sigma_floor: self.sigma_floor.unwrap_or(d.sigma_floor),
            step_safety: self.step_safety.unwrap_or(d.step_safety),
            working_set: self.working_set.unwrap_or(d.working_set),
        };
        cfg.validate().map_err(|e| Error::Config(format!("[solver]: {e}")))?;
        Ok(cfg)
    }
}

const REQUIRED_TOP: &[&str] = &["schema_version", "master_seed", "replications", "grid"];
const REQUIRED_GRID: &[&str] = &["n", "s"];

/// Lists every missing required key before handing the text to serde, which
/// would stop at the first one.
fn missing_keys(table: &toml::Table) -> Vec<String> {
    let mut missing: Vec<String> = REQUIRED_TOP
        .iter()
        .filter(|k| !table.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if let Some(toml::Value::Table(grid)) = table.get("grid") {
        for k in REQUIRED_GRID {
            if !grid.contains_key(*k) {
                missing.push(format!("grid.{k}"));
            }
        }
        if !grid.contains_key("p") && !grid.contains_key("p_factor") {
            missing.push("grid.p (or grid.p_factor)".into());
        }
        if !grid.contains_key("o") && !grid.contains_key("o_frac") {
            missing.push("grid.o (or grid.o_frac)".into());
        }
    }
    missing
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let missing = missing_keys(&table);
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "missing required keys: {}",
            missing.join(", ")
        )));
    }
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::Config("max_failure_fraction must lie in [0, 1]".into()));
        }
        let g = &self.grid;
        if g.p.is_some() == g.p_factor.is_some() {
            return Err(Error::Config("set exactly one of grid.p and grid.p_factor".into()));
        }
        if g.o.is_some() == g.o_frac.is_some() {
            return Err(Error::Config("set exactly one of grid.o and grid.o_frac".into()));
        }
        for (name, empty) in [
            ("n", g.n.is_empty()),
            ("s", g.s.is_empty()),
            ("noise", g.noise.is_empty()),
            ("strategy", g.strategy.is_empty()),
            ("magnitude", g.magnitude.is_empty()),
            ("variant", g.variant.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("grid.{name} must not be empty")));
            }
        }
        self.solver.resolve()?;
        self.cells().map(|_| ())
    }

    /// Expands the grid into validated cells in canonical order.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let g = &self.grid;
        let solver = self.solver.resolve()?;
        let noises: Vec<NoiseSpec> = g
            .noise
            .iter()
            .map(|s| s.parse().map_err(|e| Error::Config(format!("grid.noise: {e}"))))
            .collect::<Result<_>>()?;
        let mut cells = Vec::new();
        for &n in &g.n {
            let ps: Vec<usize> = match (&g.p, g.p_factor) {
                (Some(ps), _) => ps.clone(),
                (None, Some(f)) => vec![((n as f64) * f).round().max(1.0) as usize],
                (None, None) => unreachable!("checked by validate"),
            };
            let os: Vec<usize> = match (&g.o, &g.o_frac) {
                (Some(os), _) => os.clone(),
                (None, Some(fr)) => fr.iter().map(|f| (f * n as f64).round() as usize).collect(),
                (None, None) => unreachable!("checked by validate"),
            };
            for &p in &ps {
                for &s in &g.s {
                    for &o in &os {
                        for noise in &noises {
                            for &strategy in &g.strategy {
                                for &magnitude in &g.magnitude {
                                    for &variant in &g.variant {
                                        let cell = Cell {
                                            n,
                                            p,
                                            s,
                                            o,
                                            noise: noise.clone(),
                                            strategy,
                                            magnitude,
                                            variant,
                                            penalty: self
                                                .penalty
                                                .resolve(variant, noise)
                                                .map_err(|e| {
                                                    Error::Config(format!(
                                                        "[penalty] for variant {variant} and noise {noise}: {e}"
                                                    ))
                                                })?,
                                            sigma: g.sigma,
                                            rows: g.design,
                                            covariance: g.covariance,
                                            beta_magnitude: g.beta_magnitude,
                                            pattern: g.beta_pattern,
                                            solver,
                                        };
                                        cell.validate()?;
                                        cells.push(cell);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cells.sort_by(|a, b| a.ordering(b));
        cells.dedup_by(|a, b| a.ordering(b).is_eq());
        Ok(cells)
    }
}
