use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const GRID: &str = r#"
schema_version = 1
master_seed = 7
replications = 2

[grid]
n = [40]
p_factor = 1.5
s = [3]
o = [0, 2]
noise = ["gaussian"]
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pivotal-slope"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn simulate_writes_tables_and_instances() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("grid.toml"), GRID).unwrap();
    let out = run(
        tmp.path(),
        &["simulate", "--config", "grid.toml", "--out", "res", "--format", "csv", "--dump-instance", "inst"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["table.json", "records.csv", "slopes.csv"] {
        assert!(tmp.path().join("res").join(name).is_file(), "{name}");
    }
    let records = fs::read_to_string(tmp.path().join("res/records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 2);
    assert!(records.starts_with("n,p,s,o,tau,noise,strategy,magnitude,variant,replication,seed,"));

    let fit = run(tmp.path(), &["fit", "inst/cell_001.txt"]);
    assert!(fit.status.success());
    let report = json(&fit);
    assert_eq!(report["n"], 40);
    assert_eq!(report["fit"]["status"], "converged");
    assert!(report["sigma_norm_error_sq"].as_f64().unwrap() >= 0.0);
}

#[test]
fn simulate_is_reproducible_and_seed_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("grid.toml"), GRID).unwrap();
    let table = |out: &str, seed: Option<&str>| {
        let mut args = vec!["simulate", "--config", "grid.toml", "--out", out];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert!(run(tmp.path(), &args).status.success());
        fs::read_to_string(tmp.path().join(out).join("table.json")).unwrap()
    };
    let a = table("a", None);
    assert_eq!(a, table("b", None));
    assert_ne!(a, table("c", Some("8")));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), GRID.replace("s = [3]", "s = [3]\nbogus = 1")).unwrap();
    let out = run(tmp.path(), &["simulate", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert_eq!(run(tmp.path(), &["simulate"]).status.code(), Some(1));
    let too_sparse = GRID.replace("s = [3]", "s = [90]");
    fs::write(tmp.path().join("sparse.toml"), too_sparse).unwrap();
    assert_eq!(run(tmp.path(), &["simulate", "--config", "sparse.toml"]).status.code(), Some(1));
}

#[test]
fn solver_failures_above_the_limit_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let strict = GRID
        .replace("replications = 2", "replications = 2\nmax_failure_fraction = 0.0")
        .replace("noise = [\"gaussian\"]", "noise = [\"gaussian\"]\nbeta_magnitude = 5.0")
        + "\n[penalty]\nc_lambda = 0.3\nc_mu = 0.3\n\n[solver]\nmax_outer = 1\nmax_inner = 2\n";
    fs::write(tmp.path().join("strict.toml"), strict).unwrap();
    let out = run(tmp.path(), &["simulate", "--config", "strict.toml", "--out", "res"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("res/table.json").is_file());
}

#[test]
fn diagnose_reports_margins_and_noise_event() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["diagnose", "--probes", "300", "--seed", "4", "--rows", "rademacher"]);
    assert!(out.status.success());
    let report = json(&out);
    let design = &report["design"];
    let violated = ["property1_margin", "property2_margin", "property3_margin"]
        .iter()
        .any(|k| design[k].as_f64().unwrap() < 0.0);
    assert_eq!(design["violated"].as_bool().unwrap(), violated);
    assert_eq!(report["noise_event"]["o_prime"], 5);
}

#[test]
fn lower_bound_pair_is_indistinguishable() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        tmp.path(),
        &["lower-bound", "--n", "4000", "--o", "40", "--seed", "2", "--out", "lb.json", "--dump-instance", "pair"],
    );
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("lb.json")).unwrap()).unwrap();
    assert_eq!(report["indistinguishable"], true);
    assert!(tmp.path().join("pair/first.txt").is_file() && tmp.path().join("pair/second.txt").is_file());
}

#[test]
fn fit_emits_coefficient_csv() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run(tmp.path(), &["lower-bound", "--n", "200", "--o", "4", "--dump-instance", "pair"]).status.success());
    let out = run(tmp.path(), &["fit", "pair/first.txt", "--format", "csv", "--variant", "pivotal_fixed", "--tau", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("block,index,estimate,truth"));
    assert_eq!(lines.count(), 1 + 200);
}
