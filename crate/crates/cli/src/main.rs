use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pivotal_slope::datagen::{
    gen_covariance, gen_design, gen_noise, lower_bound_pair, read_instance, write_instance,
};
use pivotal_slope::diagnostics::{
    check_design, check_event_e, max_ratio_statistic, o_prime, DesignCheckConfig,
    DesignCheckReport, NoiseEventReport, DEFAULT_EVENT_C_PRIME, DEFAULT_PROBES,
    DEFAULT_PROPERTY_C_PRIME,
};
use pivotal_slope::harness::{
    emit, parse_config, prediction_error_sq, simulate_replication, OutputFormat, PenaltySection,
    Variant,
};
use pivotal_slope::penalties::{build_lambda, build_mu};
use pivotal_slope::solver::{fit_nonrobust_baseline, fit_pivotal};
use pivotal_slope::stats::{ks_critical_1pct, ks_statistic};
use pivotal_slope::{
    CovarianceKind, Error, FitConfig, FitResult, MuRegime, NoiseSpec, PenaltyConfig, RowFamily,
    Tau,
};

/// Pivotal sorted-l1 regression with adversarial outliers.
#[derive(Parser)]
#[command(name = "pivotal-slope", version)]
struct Cli {
    /// Seed for generated data; overrides `master_seed` of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or output directory for `simulate`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one instance read from an instance dump.
    Fit(FitArgs),
    /// Run a replication grid described by `--config`.
    Simulate(SimulateArgs),
    /// Monte-Carlo checks of the design properties and the noise event.
    Diagnose(DiagnoseArgs),
    /// Generate the two-point lower-bound pair and test their responses.
    LowerBound(LowerBoundArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Instance dump written by `simulate --dump-instance`.
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::PivotalSorted)]
    variant: VariantArg,
    #[arg(long, default_value_t = 2.0)]
    c_lambda: f64,
    #[arg(long, default_value_t = 2.0)]
    c_mu: f64,
    /// Noise moment exponent, a number or `inf`; defaults to the instance's noise.
    #[arg(long)]
    tau: Option<Tau>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, value_enum)]
    mu_regime: Option<RegimeArg>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Also write the first replication of every cell to this directory.
    #[arg(long)]
    dump_instance: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    p: usize,
    /// Sparsity for the restricted eigenvalue estimate.
    #[arg(long, default_value_t = 5)]
    s: usize,
    #[arg(long, value_enum, default_value_t = RowsArg::Gaussian)]
    rows: RowsArg,
    /// AR(1) correlation of the design columns; identity when absent.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_PROBES)]
    probes: usize,
    #[arg(long, default_value_t = 2.0)]
    c_lambda: f64,
    #[arg(long, default_value_t = DEFAULT_PROPERTY_C_PRIME)]
    c_prime: f64,
    /// Noise family, e.g. `gaussian`, `student_t:3`.
    #[arg(long, default_value = "gaussian")]
    noise: NoiseSpec,
    /// Number of outliers the noise event is truncated for.
    #[arg(long, default_value_t = 0)]
    o: usize,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_EVENT_C_PRIME)]
    event_c_prime: f64,
}

#[derive(Args)]
struct LowerBoundArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    o: usize,
    #[arg(long, default_value = "2")]
    tau: Tau,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Write both instances of the pair to this directory.
    #[arg(long)]
    dump_instance: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum VariantArg {
    PivotalSorted,
    PivotalFixed,
    NonrobustBaseline,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::PivotalSorted => Variant::PivotalSorted,
            VariantArg::PivotalFixed => Variant::PivotalFixed,
            VariantArg::NonrobustBaseline => Variant::NonrobustBaseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum RegimeArg {
    SortedHeavy,
    SortedSubgauss,
    Fixed,
}

impl From<RegimeArg> for MuRegime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::SortedHeavy => MuRegime::SortedHeavy,
            RegimeArg::SortedSubgauss => MuRegime::SortedSubgauss,
            RegimeArg::Fixed => MuRegime::Fixed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum RowsArg {
    Gaussian,
    Rademacher,
}

impl From<RowsArg> for RowFamily {
    fn from(r: RowsArg) -> Self {
        match r {
            RowsArg::Gaussian => RowFamily::Gaussian,
            RowsArg::Rademacher => RowFamily::Rademacher,
        }
    }
}

enum Failure {
    Config(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(args) => fit(&cli, args),
        Command::Simulate(args) => simulate(&cli, args),
        Command::Diagnose(args) => diagnose(&cli, args),
        Command::LowerBound(args) => lower_bound(&cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn sink(out: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(path)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(out: Option<&Path>, value: &impl Serialize) -> Outcome {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    variant: Variant,
    n: usize,
    p: usize,
    penalty: PenaltyConfig,
    objective: f64,
    sigma_norm_error_sq: f64,
    pred_error_sq: f64,
    theta_error_sq: f64,
    fit: &'a FitResult,
}

#[derive(Serialize)]
struct CoefficientRow {
    block: &'static str,
    index: usize,
    estimate: f64,
    truth: f64,
}

fn fit(cli: &Cli, args: &FitArgs) -> Outcome {
    let inst = read_instance(BufReader::new(File::open(&args.instance)?))?;
    let variant = Variant::from(args.variant);
    let section = PenaltySection {
        c_lambda: args.c_lambda,
        c_mu: args.c_mu,
        delta: args.delta,
        tau: args.tau,
        mu_regime: args.mu_regime.map(MuRegime::from),
    };
    let penalty = section.resolve(variant, &inst.truth.noise)?;
    let (n, p) = (inst.n(), inst.p());
    let lam = build_lambda(n, p, &penalty)?;
    let cfg = FitConfig::default();
    let result = match variant {
        Variant::NonrobustBaseline => fit_nonrobust_baseline(&inst.ds, &lam, &cfg)?,
        _ => fit_pivotal(&inst.ds, &lam, &build_mu(n, &penalty)?, &cfg)?,
    };
    let delta: Vec<f64> = result
        .beta_hat
        .iter()
        .zip(&inst.truth.beta_star)
        .map(|(a, b)| a - b)
        .collect();
    let theta_error_sq = result
        .theta_hat
        .iter()
        .zip(&inst.truth.theta_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    match cli.format {
        Format::Json => write_json(
            cli.out.as_deref(),
            &FitReport {
                variant,
                n,
                p,
                penalty,
                objective: result.objective(),
                sigma_norm_error_sq: inst.truth.cov.quad_form(&delta),
                pred_error_sq: prediction_error_sq(&inst, &delta),
                theta_error_sq,
                fit: &result,
            },
        )?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(cli.out.as_deref())?);
            let blocks = [
                ("beta", &result.beta_hat, &inst.truth.beta_star),
                ("theta", &result.theta_hat, &inst.truth.theta_star),
            ];
            for (block, est, truth) in blocks {
                for (index, (&estimate, &truth)) in est.iter().zip(truth.iter()).enumerate() {
                    w.serialize(CoefficientRow {
                        block,
                        index,
                        estimate,
                        truth,
                    })?;
                }
            }
            w.flush()?;
        }
    }
    log::info!("fit finished with status {}", result.status);
    Ok(())
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Outcome {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("simulate needs --config".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    let cells = cfg.cells()?;
    log::info!("{} cells x {} replications", cells.len(), cfg.replications);

    if let Some(dir) = &args.dump_instance {
        fs::create_dir_all(dir)?;
        let mut sorted = cells.clone();
        sorted.sort_by(|a, b| a.ordering(b));
        for (k, cell) in sorted.iter().enumerate() {
            let rep = simulate_replication(cell, 0, cell.replication_seed(cfg.master_seed, 0))?;
            let file = dir.join(format!("cell_{k:03}.txt"));
            write_instance(&rep.instance, BufWriter::new(File::create(&file)?))?;
            log::info!("{} -> {}", cell.describe(), file.display());
        }
    }

    let output = pivotal_slope::harness::run_cells(&cells, cfg.replications, cfg.master_seed);
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    for file in emit(&dir, &output, format)? {
        println!("{}", file.display());
    }
    let failed = output.failure_fraction();
    if failed > cfg.max_failure_fraction {
        return Err(Failure::Solver(format!(
            "{:.1}% of replications did not converge (limit {:.1}%)",
            100.0 * failed,
            100.0 * cfg.max_failure_fraction
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct DiagnoseReport {
    n: usize,
    p: usize,
    seed: u64,
    rows: RowFamily,
    covariance: CovarianceKind,
    design: DesignCheckReport,
    noise: String,
    noise_event: NoiseEventReport,
    max_ratio_statistic: f64,
}

fn diagnose(cli: &Cli, args: &DiagnoseArgs) -> Outcome {
    let seed = cli.seed.unwrap_or(0);
    let kind = match args.rho {
        Some(rho) => CovarianceKind::Ar1 { rho },
        None => CovarianceKind::Identity,
    };
    let cov = gen_covariance(args.p, kind)?;
    let rows = RowFamily::from(args.rows);
    let x = gen_design(args.n, args.p, &cov, rows, seed)?;
    let penalty = PenaltyConfig {
        c_lambda: args.c_lambda,
        c_mu: args.c_lambda,
        ..PenaltyConfig::sorted(args.noise.tau)
    };
    let lam = build_lambda(args.n, args.p, &penalty)?;
    let design_cfg = DesignCheckConfig {
        probes: args.probes,
        c_prime: args.c_prime,
        delta: args.delta,
        s: args.s,
    };
    let design = check_design(&x, &cov, &lam, &design_cfg, seed)?;
    let xi = gen_noise(args.n, &args.noise, seed)?;
    let mu = build_mu(args.n, &penalty)?;
    let noise_event = check_event_e(&xi, o_prime(args.o, args.delta, args.n), &mu, args.event_c_prime)?;
    write_json(
        cli.out.as_deref(),
        &DiagnoseReport {
            n: args.n,
            p: args.p,
            seed,
            rows,
            covariance: kind,
            design,
            noise: args.noise.to_string(),
            noise_event,
            max_ratio_statistic: max_ratio_statistic(&xi),
        },
    )
}

#[derive(Serialize)]
struct LowerBoundReport {
    n: usize,
    o: usize,
    tau: Tau,
    seed: u64,
    beta_first: f64,
    sigma_second: f64,
    outliers_first: usize,
    ks_statistic: f64,
    ks_critical_1pct: f64,
    indistinguishable: bool,
}

fn lower_bound(cli: &Cli, args: &LowerBoundArgs) -> Outcome {
    let seed = cli.seed.unwrap_or(0);
    let (first, second) = lower_bound_pair(args.n, args.o, args.sigma, args.tau, seed)?;
    if let Some(dir) = &args.dump_instance {
        fs::create_dir_all(dir)?;
        for (name, inst) in [("first.txt", &first), ("second.txt", &second)] {
            write_instance(inst, BufWriter::new(File::create(dir.join(name))?))?;
        }
    }
    let ya: Vec<f64> = first.ds.y.iter().copied().collect();
    let yb: Vec<f64> = second.ds.y.iter().copied().collect();
    let ks = ks_statistic(&ya, &yb);
    let critical = ks_critical_1pct(ya.len(), yb.len());
    write_json(
        cli.out.as_deref(),
        &LowerBoundReport {
            n: args.n,
            o: args.o,
            tau: args.tau,
            seed,
            beta_first: first.truth.beta_star[0],
            sigma_second: second.truth.sigma,
            outliers_first: first.truth.o(),
            ks_statistic: ks,
            ks_critical_1pct: critical,
            indistinguishable: ks < critical,
        },
    )
}
