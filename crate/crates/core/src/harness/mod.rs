//! Seeded replication grids: generate an instance per (cell, replication), fit
//! the configured estimator, score it against the ground truth and aggregate
//! the errors into quantile tables and log-log rate slopes.

mod config;
mod emit;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    contaminate, gen_instance, AdversaryStrategy, CovarianceKind, InstanceSpec, NoiseSpec,
    RegressionInstance, RowFamily, SignalPattern,
};
use crate::error::{invalid, Error, Result};
use crate::penalties::{build_lambda, build_mu, PenaltyConfig};
use crate::rng::{derive_seed, hash_str};
use crate::solver::{fit_nonrobust_baseline, fit_pivotal, FitConfig, FitResult, FitStatus};
use crate::sorted_l1::WeightSequence;
use crate::stats::{fit_loglog_slope, quantile, quantile_sorted};

pub use config::{
    parse_config, ExperimentConfig, GridSection, PenaltySection, SolverSection, SCHEMA_VERSION,
};
pub use emit::{emit, read_records_csv, write_records_csv, write_slopes_csv, OutputFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    PivotalSorted,
    PivotalFixed,
    NonrobustBaseline,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::PivotalSorted => "pivotal_sorted",
            Variant::PivotalFixed => "pivotal_fixed",
            Variant::NonrobustBaseline => "nonrobust_baseline",
        })
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub o: usize,
    pub noise: NoiseSpec,
    pub strategy: AdversaryStrategy,
    pub magnitude: f64,
    pub variant: Variant,
    pub penalty: PenaltyConfig,
    pub sigma: f64,
    pub rows: RowFamily,
    pub covariance: CovarianceKind,
    pub beta_magnitude: f64,
    pub pattern: SignalPattern,
    pub solver: FitConfig,
}

impl Cell {
    /// Gaussian design and noise, identity covariance, sorted penalties.
    pub fn gaussian(n: usize, p: usize, s: usize, o: usize) -> Self {
        Self {
            n,
            p,
            s,
            o,
            noise: NoiseSpec::gaussian(),
            strategy: AdversaryStrategy::RandomLarge,
            magnitude: 10.0,
            variant: Variant::PivotalSorted,
            penalty: PenaltyConfig::default(),
            sigma: 1.0,
            rows: RowFamily::Gaussian,
            covariance: CovarianceKind::Identity,
            beta_magnitude: 1.0,
            pattern: SignalPattern::Flat,
            solver: FitConfig::default(),
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "n={} p={} s={} o={} noise={} strategy={} magnitude={} variant={}",
            self.n, self.p, self.s, self.o, self.noise, self.strategy, self.magnitude, self.variant
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(format!("cell {}: {msg}", self.describe())));
        if self.n == 0 || self.p == 0 {
            return fail("n and p must be positive");
        }
        if self.s > self.p {
            return fail("s > p");
        }
        if self.o > self.n {
            return fail("o > n");
        }
        if !(self.sigma >= 0.0) || !self.magnitude.is_finite() {
            return fail("sigma must be non-negative and magnitude finite");
        }
        self.noise
            .validate()
            .and_then(|_| self.penalty.validate())
            .or_else(|e| fail(&e.to_string()))
    }

    /// Canonical order used to make grid output independent of cell order.
    pub fn ordering(&self, other: &Self) -> Ordering {
        (self.n, self.p, self.s, self.o)
            .cmp(&(other.n, other.p, other.s, other.o))
            .then_with(|| self.noise.to_string().cmp(&other.noise.to_string()))
            .then_with(|| self.strategy.to_string().cmp(&other.strategy.to_string()))
            .then_with(|| self.magnitude.total_cmp(&other.magnitude))
            .then_with(|| self.variant.cmp(&other.variant))
    }

    pub fn instance_spec(&self) -> InstanceSpec {
        InstanceSpec {
            n: self.n,
            p: self.p,
            s: self.s,
            beta_magnitude: self.beta_magnitude,
            pattern: self.pattern,
            covariance: self.covariance,
            rows: self.rows,
            sigma: self.sigma,
            noise: self.noise.clone(),
        }
    }

    /// `lambda`, and `mu` unless the variant has no outlier block.
    pub fn penalties(&self) -> Result<(WeightSequence, Option<WeightSequence>)> {
        let lam = build_lambda(self.n, self.p, &self.penalty)?;
        let mu = match self.variant {
            Variant::NonrobustBaseline => None,
            _ => Some(build_mu(self.n, &self.penalty)?),
        };
        Ok((lam, mu))
    }

    /// Seed of replication `rep`. Contamination magnitude, strategy and the
    /// estimator variant are not part of it, so cells differing only in those
    /// see the same design, signal and noise.
    pub fn replication_seed(&self, master: u64, rep: usize) -> u64 {
        derive_seed(
            master,
            &[
                self.n as u64,
                self.p as u64,
                self.s as u64,
                self.o as u64,
                hash_str(&self.noise.to_string()),
                rep as u64,
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Converged,
    MaxIter,
    DegenerateSigma,
    Error,
}

impl From<FitStatus> for RecordStatus {
    fn from(s: FitStatus) -> Self {
        match s {
            FitStatus::Converged => RecordStatus::Converged,
            FitStatus::MaxIter => RecordStatus::MaxIter,
            FitStatus::DegenerateSigma => RecordStatus::DegenerateSigma,
        }
    }
}

/// One row of `records.csv`; the field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub o: usize,
    pub tau: String,
    pub noise: String,
    pub strategy: AdversaryStrategy,
    pub magnitude: f64,
    pub variant: Variant,
    pub replication: usize,
    pub seed: u64,
    pub sigma_norm_error_sq: f64,
    pub pred_error_sq: f64,
    pub theta_error_sq: f64,
    pub sigma_hat: f64,
    pub status: RecordStatus,
    pub wall_ms: f64,
}

impl ReplicationRecord {
    fn keyed(cell: &Cell, rep: usize, seed: u64) -> Self {
        Self {
            n: cell.n,
            p: cell.p,
            s: cell.s,
            o: cell.o,
            tau: cell.penalty.tau.to_string(),
            noise: cell.noise.to_string(),
            strategy: cell.strategy,
            magnitude: cell.magnitude,
            variant: cell.variant,
            replication: rep,
            seed,
            sigma_norm_error_sq: f64::NAN,
            pred_error_sq: f64::NAN,
            theta_error_sq: f64::NAN,
            sigma_hat: f64::NAN,
            status: RecordStatus::Error,
            wall_ms: 0.0,
        }
    }

    /// The record with its timing zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        }
    }

    fn group_key(&self) -> CellKey {
        CellKey {
            n: self.n,
            p: self.p,
            s: self.s,
            o: self.o,
            tau: self.tau.clone(),
            noise: self.noise.clone(),
            strategy: self.strategy.to_string(),
            magnitude_bits: self.magnitude.to_bits(),
            variant: self.variant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    n: usize,
    p: usize,
    s: usize,
    o: usize,
    tau: String,
    noise: String,
    strategy: String,
    magnitude_bits: u64,
    variant: Variant,
}

/// A simulated replication with everything needed for follow-up checks.
#[derive(Debug, Clone)]
pub struct Replication {
    pub instance: RegressionInstance,
    pub fit: FitResult,
    pub lam: WeightSequence,
    pub mu: Option<WeightSequence>,
    pub record: ReplicationRecord,
}

pub fn simulate_replication(cell: &Cell, rep: usize, seed: u64) -> Result<Replication> {
    cell.validate()?;
    let start = Instant::now();
    let clean = gen_instance(&cell.instance_spec(), seed)?;
    let instance = contaminate(&clean, cell.strategy, cell.o, cell.magnitude)?;
    let (lam, mu) = cell.penalties()?;
    let fit = match &mu {
        Some(mu) => fit_pivotal(&instance.ds, &lam, mu, &cell.solver)?,
        None => fit_nonrobust_baseline(&instance.ds, &lam, &cell.solver)?,
    };
    let truth = &instance.truth;
    let delta: Vec<f64> = fit
        .beta_hat
        .iter()
        .zip(&truth.beta_star)
        .map(|(a, b)| a - b)
        .collect();
    let mut record = ReplicationRecord::keyed(cell, rep, seed);
    record.sigma_norm_error_sq = truth.cov.quad_form(&delta);
    record.pred_error_sq = prediction_error_sq(&instance, &delta);
    record.theta_error_sq = fit
        .theta_hat
        .iter()
        .zip(&truth.theta_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    record.sigma_hat = fit.sigma_hat;
    record.status = fit.status.into();
    record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Replication {
        instance,
        fit,
        lam,
        mu,
        record,
    })
}

/// `||X delta||^2 / n`.
pub fn prediction_error_sq(inst: &RegressionInstance, delta: &[f64]) -> f64 {
    let x = &inst.ds.x;
    let mut xd = vec![0.0; x.nrows()];
    for (j, &d) in delta.iter().enumerate() {
        if d != 0.0 {
            for (o, v) in xd.iter_mut().zip(x.column(j).iter()) {
                *o += d * v;
            }
        }
    }
    xd.iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64
}

/// Runs one replication; failures become records with status `error`.
pub fn run_replication(cell: &Cell, rep: usize, seed: u64) -> ReplicationRecord {
    match simulate_replication(cell, rep, seed) {
        Ok(r) => r.record,
        Err(e) => {
            log::warn!("replication {rep} of cell {} failed: {e}", cell.describe());
            ReplicationRecord::keyed(cell, rep, seed)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub median: f64,
    pub q90: f64,
    pub q99: f64,
}

impl Quantiles {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            median: quantile_sorted(&v, 0.5),
            q90: quantile_sorted(&v, 0.9),
            q99: quantile_sorted(&v, 0.99),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub o: usize,
    pub tau: String,
    pub noise: String,
    pub strategy: AdversaryStrategy,
    pub magnitude: f64,
    pub variant: Variant,
    pub count: usize,
    pub converged: usize,
    pub failed: usize,
    pub sigma_norm_error_sq: Option<Quantiles>,
    pub pred_error_sq: Option<Quantiles>,
    pub theta_error_sq: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    /// Axis the median error is regressed on, `n` or `o`.
    pub against: String,
    /// The remaining cell coordinates shared by the fitted points.
    pub group: String,
    pub points: usize,
    pub slope: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub cells: Vec<CellSummary>,
    pub slopes: Vec<SlopeFit>,
}

/// Aggregates records per cell (quantiles over finite metrics) and fits
/// log-log slopes of the median `||beta_hat - beta*||_Sigma^2` against `n` and
/// against `o > 0`.
pub fn summarize(records: &[ReplicationRecord]) -> RateTable {
    let mut groups: BTreeMap<CellKey, Vec<&ReplicationRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.group_key()).or_default().push(r);
    }
    let cells: Vec<CellSummary> = groups
        .values()
        .map(|rs| {
            let first = rs[0];
            let metric = |f: fn(&ReplicationRecord) -> f64| {
                let v: Vec<f64> = rs
                    .iter()
                    .filter(|r| r.status != RecordStatus::Error)
                    .map(|r| f(r))
                    .filter(|v| v.is_finite())
                    .collect();
                Quantiles::of(&v)
            };
            CellSummary {
                n: first.n,
                p: first.p,
                s: first.s,
                o: first.o,
                tau: first.tau.clone(),
                noise: first.noise.clone(),
                strategy: first.strategy,
                magnitude: first.magnitude,
                variant: first.variant,
                count: rs.len(),
                converged: rs.iter().filter(|r| r.status == RecordStatus::Converged).count(),
                failed: rs.iter().filter(|r| r.status == RecordStatus::Error).count(),
                sigma_norm_error_sq: metric(|r| r.sigma_norm_error_sq),
                pred_error_sq: metric(|r| r.pred_error_sq),
                theta_error_sq: metric(|r| r.theta_error_sq),
            }
        })
        .collect();
    let mut slopes = rate_slopes(&cells, "n");
    slopes.extend(rate_slopes(&cells, "o"));
    RateTable { cells, slopes }
}

fn rate_slopes(cells: &[CellSummary], against: &str) -> Vec<SlopeFit> {
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for c in cells {
        let Some(q) = c.sigma_norm_error_sq else { continue };
        let (x, group) = match against {
            "n" => (
                c.n as f64,
                format!(
                    "s={} o={} noise={} strategy={} magnitude={} variant={}",
                    c.s, c.o, c.noise, c.strategy, c.magnitude, c.variant
                ),
            ),
            _ => {
                if c.o == 0 {
                    continue;
                }
                (
                    c.o as f64,
                    format!(
                        "n={} p={} s={} noise={} strategy={} magnitude={} variant={}",
                        c.n, c.p, c.s, c.noise, c.strategy, c.magnitude, c.variant
                    ),
                )
            }
        };
        groups.entry(group).or_default().push((x, q.median));
    }
    groups
        .into_iter()
        .filter_map(|(group, pts)| {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let (slope, stderr) = fit_loglog_slope(&xs, &ys).ok()?;
            Some(SlopeFit {
                against: against.to_string(),
                group,
                points: pts.len(),
                slope,
                stderr,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutput {
    pub records: Vec<ReplicationRecord>,
    pub table: RateTable,
}

impl GridOutput {
    /// Fraction of replications that did not reach `converged`.
    pub fn failure_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let bad = self
            .records
            .iter()
            .filter(|r| r.status != RecordStatus::Converged)
            .count();
        bad as f64 / self.records.len() as f64
    }
}

/// Runs every (cell, replication) pair on the rayon pool and returns the
/// records sorted by cell and seed, together with the aggregated table.
pub fn run_cells(cells: &[Cell], replications: usize, master_seed: u64) -> GridOutput {
    let mut cells = cells.to_vec();
    cells.sort_by(|a, b| a.ordering(b));
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..replications).map(move |r| (c, r)))
        .collect();
    let mut records: Vec<(usize, ReplicationRecord)> = jobs
        .par_iter()
        .map(|&(c, rep)| {
            let cell = &cells[c];
            (c, run_replication(cell, rep, cell.replication_seed(master_seed, rep)))
        })
        .collect();
    records.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.seed.cmp(&b.1.seed)));
    let records: Vec<ReplicationRecord> = records.into_iter().map(|(_, r)| r).collect();
    let table = summarize(&records);
    GridOutput { records, table }
}

pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridOutput> {
    cfg.validate()?;
    let cells = cfg.cells()?;
    Ok(run_cells(&cells, cfg.replications, cfg.master_seed))
}

/// Empirical `(1 - delta)`-quantile of `||beta_hat - beta*||_Sigma^2`.
pub fn summarize_deviation(records: &[ReplicationRecord], delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    let v: Vec<f64> = records
        .iter()
        .map(|r| r.sigma_norm_error_sq)
        .filter(|v| v.is_finite())
        .collect();
    if v.is_empty() {
        return invalid("no finite records in cell");
    }
    quantile(&v, 1.0 - delta)
}
