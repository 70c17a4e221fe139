//! Profiling the outlier block out of the squared loss.
//!
//! For a constant penalty `m` on `theta`,
//!
//! ```text
//! min_theta ||r - sqrt(n) theta||^2 / (2n) + m ||theta||_1 = m^2 sum_j H(r_j / (m sqrt(n)))
//! ```
//!
//! with `H` the Huber function of unit threshold and `r = Y - X beta`.

use nalgebra::DMatrix;

use super::{engine, Dataset, FitConfig};
use crate::error::{check_len, invalid, Result};

/// `x^2 / 2` for `|x| <= 1`, `|x| - 1/2` otherwise.
pub fn huber(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

pub fn huber_profile_objective(ds: &Dataset, beta: &[f64], mu_const: f64) -> Result<f64> {
    check_len("beta", ds.p(), beta.len())?;
    if !(mu_const > 0.0) || !mu_const.is_finite() {
        return invalid(format!("mu_const must be positive, got {mu_const}"));
    }
    let zero = vec![0.0; ds.n()];
    let scale = mu_const * (ds.n() as f64).sqrt();
    let r = ds.residual(beta, &zero);
    Ok(mu_const * mu_const * r.iter().map(|v| huber(v / scale)).sum::<f64>())
}

/// Minimizes `||Y - X beta - sqrt(n) theta||^2 / (2n) + mu_const ||theta||_1`
/// over `theta` with the generic proximal-gradient engine. Returns the
/// minimizer and the attained value.
pub fn profile_theta(
    ds: &Dataset,
    beta: &[f64],
    mu_const: f64,
    cfg: &FitConfig,
) -> Result<(Vec<f64>, f64)> {
    check_len("beta", ds.p(), beta.len())?;
    cfg.validate()?;
    if !(mu_const > 0.0) || !mu_const.is_finite() {
        return invalid(format!("mu_const must be positive, got {mu_const}"));
    }
    let n = ds.n();
    let zero = vec![0.0; n];
    let target = ds.residual(beta, &zero);
    let empty = DMatrix::<f64>::zeros(n, 0);
    let mu = vec![mu_const; n];
    let prob = engine::Problem {
        xw: &empty,
        target: &target,
        sigma: 1.0,
        lam: &[],
        mu: Some(&mu),
        lip_cap: n as f64,
    };
    let settings = engine::Settings {
        max_iter: cfg.max_inner,
        tol: cfg.inner_tol(),
        step_safety: cfg.step_safety,
    };
    let mut b = Vec::new();
    let mut theta = vec![0.0; n];
    let mut lip_base = n as f64;
    engine::solve(&prob, &mut b, &mut theta, &mut lip_base, &settings);
    let value = prob.objective(&b, &theta);
    Ok((theta, value))
}
