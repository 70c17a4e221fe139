//! Plain-text instance dump.
//!
//! ```text
//! pivotal-slope-instance 1
//! meta {"seed":..,"n":..,"p":..,"sigma":..,"noise":{..}}
//! covariance identity | covariance dense   (followed by p rows)
//! X                                        (followed by n rows of p values)
//! Y <n values>
//! xi <n values>
//! beta_star <p values>
//! theta_star <n values>
//! ```
//!
//! Values are written in shortest round-trip form, so reading a dump gives back
//! the identical instance.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::noise::NoiseSpec;
use super::{support, Covariance, GroundTruth, RegressionInstance};
use crate::error::{Error, Result};
use crate::solver::Dataset;

const MAGIC: &str = "pivotal-slope-instance";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    seed: u64,
    n: usize,
    p: usize,
    sigma: f64,
    noise: NoiseSpec,
}

fn write_row<'a>(w: &mut impl Write, label: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if !label.is_empty() {
        w.write_all(label.as_bytes())?;
    }
    let mut first = label.is_empty();
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        first = false;
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_instance(inst: &RegressionInstance, mut w: impl Write) -> Result<()> {
    let (n, p) = (inst.n(), inst.p());
    writeln!(w, "{MAGIC} {VERSION}")?;
    let meta = Meta {
        seed: inst.seed,
        n,
        p,
        sigma: inst.truth.sigma,
        noise: inst.truth.noise.clone(),
    };
    writeln!(w, "meta {}", serde_json::to_string(&meta)?)?;
    match &inst.truth.cov {
        Covariance::Identity(_) => writeln!(w, "covariance identity")?,
        Covariance::Dense(m) => {
            writeln!(w, "covariance dense")?;
            for i in 0..p {
                write_row(&mut w, "", m.row(i).iter())?;
            }
        }
    }
    writeln!(w, "X")?;
    for i in 0..n {
        write_row(&mut w, "", inst.ds.x.row(i).iter())?;
    }
    write_row(&mut w, "Y", inst.ds.y.iter())?;
    write_row(&mut w, "xi", inst.xi.iter())?;
    write_row(&mut w, "beta_star", inst.truth.beta_star.iter())?;
    write_row(&mut w, "theta_star", inst.truth.theta_star.iter())?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn values(&self, text: &str, expected: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = text
            .split_ascii_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        if v.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn labelled(&mut self, label: &str, expected: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let rest = l
            .strip_prefix(label)
            .filter(|r| r.is_empty() || r.starts_with(' '))
            .ok_or_else(|| self.err(format!("expected `{label}` section")))?;
        self.values(rest, expected)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let l = self.next()?;
            for (j, v) in self.values(&l, cols)?.into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }
}

pub fn read_instance(r: impl BufRead) -> Result<RegressionInstance> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let header = lines.next()?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
        Some((MAGIC, v)) => return Err(lines.err(format!("unsupported version {v}"))),
        _ => return Err(lines.err("not an instance dump")),
    }
    let meta_line = lines.next()?;
    let meta: Meta = meta_line
        .strip_prefix("meta ")
        .ok_or_else(|| lines.err("expected `meta` line"))
        .and_then(|m| serde_json::from_str(m).map_err(|e| lines.err(e.to_string())))?;
    let (n, p) = (meta.n, meta.p);
    let cov = match lines.next()?.trim() {
        "covariance identity" => Covariance::Identity(p),
        "covariance dense" => Covariance::Dense(lines.matrix(p, p)?),
        _ => return Err(lines.err("expected `covariance identity` or `covariance dense`")),
    };
    if lines.next()?.trim() != "X" {
        return Err(lines.err("expected `X` section"));
    }
    let x = lines.matrix(n, p)?;
    let y = lines.labelled("Y", n)?;
    let xi = lines.labelled("xi", n)?;
    let beta = lines.labelled("beta_star", p)?;
    let theta = lines.labelled("theta_star", n)?;
    Ok(RegressionInstance {
        ds: Dataset::new(x, DVector::from_vec(y))?,
        truth: GroundTruth {
            support_s: support(&beta),
            support_o: support(&theta),
            beta_star: beta,
            theta_star: theta,
            sigma: meta.sigma,
            cov,
            noise: meta.noise,
        },
        seed: meta.seed,
        xi,
    })
}
