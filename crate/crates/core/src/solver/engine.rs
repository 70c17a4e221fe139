//! Accelerated proximal gradient for
//!
//! ```text
//! min_{b, theta}  ||t - X_W b - sqrt(n) theta||^2 / (2 n sigma) + ||b||_lam + ||theta||_mu
//! ```
//!
//! where `X_W` is a column subset of the design. The augmented design
//! `[X_W, sqrt(n) I]` is never formed. Momentum is reset whenever a step would
//! increase the objective, so accepted iterates are monotone.

use nalgebra::DMatrix;

use crate::linalg::{dot, norm2_sq};
use crate::sorted_l1::{norm_unchecked, prox_into};

pub(crate) struct Problem<'a> {
    pub xw: &'a DMatrix<f64>,
    pub target: &'a [f64],
    pub sigma: f64,
    /// Penalty weights for the active coefficients, already truncated to `xw.ncols()`.
    pub lam: &'a [f64],
    /// `None` freezes the outlier block at zero.
    pub mu: Option<&'a [f64]>,
    /// Guaranteed upper bound on the squared operator norm.
    pub lip_cap: f64,
}

pub(crate) struct Settings {
    pub max_iter: usize,
    pub tol: f64,
    pub step_safety: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Outcome {
    pub iterations: usize,
    pub converged: bool,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.target.len()
    }

    fn sqrt_n(&self) -> f64 {
        (self.n() as f64).sqrt()
    }

    fn scale(&self) -> f64 {
        1.0 / (self.n() as f64 * self.sigma)
    }

    /// `out = X_W b + sqrt(n) theta`, skipping zero coefficients.
    fn apply(&self, b: &[f64], theta: &[f64], out: &mut [f64]) {
        let sn = self.sqrt_n();
        if self.mu.is_some() {
            for (o, t) in out.iter_mut().zip(theta) {
                *o = sn * t;
            }
        } else {
            out.fill(0.0);
        }
        for (j, &bj) in b.iter().enumerate() {
            if bj != 0.0 {
                for (o, x) in out.iter_mut().zip(self.xw.column(j).iter()) {
                    *o += bj * x;
                }
            }
        }
    }

    /// Gradient of the smooth part at a point whose image is `az`; also
    /// returns the smooth value.
    fn gradient(&self, az: &[f64], gb: &mut [f64], gt: &mut [f64], resid: &mut [f64]) -> f64 {
        for ((r, t), a) in resid.iter_mut().zip(self.target).zip(az) {
            *r = t - a;
        }
        let scale = self.scale();
        for (j, g) in gb.iter_mut().enumerate() {
            *g = -scale * dot(self.xw.column(j).as_slice(), resid);
        }
        if self.mu.is_some() {
            let sn = self.sqrt_n();
            for (g, r) in gt.iter_mut().zip(resid.iter()) {
                *g = -scale * sn * r;
            }
        }
        0.5 * scale * norm2_sq(resid)
    }

    /// Bound on the rounding error of `smooth` at an image with squared norm `az_sq`.
    fn rounding(&self, t_sq: f64, az_sq: f64) -> f64 {
        8.0 * f64::EPSILON * self.scale() * (t_sq + az_sq)
    }

    fn smooth(&self, az: &[f64]) -> f64 {
        let s: f64 = self
            .target
            .iter()
            .zip(az)
            .map(|(t, a)| (t - a) * (t - a))
            .sum();
        0.5 * self.scale() * s
    }

    fn penalty(&self, b: &[f64], theta: &[f64]) -> f64 {
        let mut p = norm_unchecked(b, self.lam);
        if let Some(mu) = self.mu {
            p += norm_unchecked(theta, mu);
        }
        p
    }

    pub fn objective(&self, b: &[f64], theta: &[f64]) -> f64 {
        let mut az = vec![0.0; self.n()];
        self.apply(b, theta, &mut az);
        self.smooth(&az) + self.penalty(b, theta)
    }
}

/// Runs the method from `(b, theta)` in place. `lip_base` is an estimate of
/// the squared norm of the augmented operator and is increased by
/// backtracking when it proves too small.
pub(crate) fn solve(
    prob: &Problem<'_>,
    b: &mut Vec<f64>,
    theta: &mut Vec<f64>,
    lip_base: &mut f64,
    settings: &Settings,
) -> Outcome {
    let n = prob.n();
    let m = b.len();
    let free_theta = prob.mu.is_some();
    let scale = prob.scale();
    let t_sq = norm2_sq(prob.target);

    let mut ax = vec![0.0; n];
    prob.apply(b, theta, &mut ax);
    let mut f_x = prob.smooth(&ax) + prob.penalty(b, theta);

    let mut yb = b.clone();
    let mut yt = theta.clone();
    let mut ay = ax.clone();
    let mut momentum_t: f64 = 1.0;
    let mut restarted = true;

    let mut gb = vec![0.0; m];
    let mut gt = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut nb = vec![0.0; m];
    let mut nt = vec![0.0; n];
    let mut anew = vec![0.0; n];
    let mut wb = vec![0.0; m];
    let mut wt = vec![0.0; n];
    let mut lam_step = vec![0.0; m];
    let mut mu_step = vec![0.0; n];

    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_iter {
        iterations += 1;
        let f_y = prob.gradient(&ay, &mut gb, &mut gt, &mut resid);

        let mut f_new;
        let noise_y = prob.rounding(t_sq, norm2_sq(&ay));
        loop {
            let lip = (*lip_base * scale).max(f64::MIN_POSITIVE);
            let step = 1.0 / lip;
            for j in 0..m {
                wb[j] = yb[j] - step * gb[j];
                lam_step[j] = step * prob.lam[j];
            }
            prox_step(&wb, &lam_step, &mut nb);
            if let Some(mu) = prob.mu {
                for i in 0..n {
                    wt[i] = yt[i] - step * gt[i];
                    mu_step[i] = step * mu[i];
                }
                prox_step(&wt, &mu_step, &mut nt);
            }
            prob.apply(&nb, &nt, &mut anew);
            f_new = prob.smooth(&anew);
            if settings.step_safety >= 1.0 {
                break;
            }
            let mut lin = 0.0;
            let mut dist = 0.0;
            for j in 0..m {
                let d = nb[j] - yb[j];
                lin += gb[j] * d;
                dist += d * d;
            }
            if free_theta {
                for i in 0..n {
                    let d = nt[i] - yt[i];
                    lin += gt[i] * d;
                    dist += d * d;
                }
            }
            let bound = f_y + lin + 0.5 * lip * dist;
            let noise = noise_y + prob.rounding(t_sq, norm2_sq(&anew));
            if f_new <= bound + noise || dist == 0.0 || *lip_base >= prob.lip_cap {
                break;
            }
            *lip_base = (*lip_base / settings.step_safety).min(prob.lip_cap);
        }

        let total_new = f_new + prob.penalty(&nb, &nt);
        let noise = prob.rounding(t_sq, norm2_sq(&anew)) + prob.rounding(t_sq, norm2_sq(&ax));
        if total_new > f_x + noise + 8.0 * f64::EPSILON * f_x.abs() {
            if restarted {
                // a plain proximal step from the current point cannot improve it
                converged = true;
                break;
            }
            yb.copy_from_slice(b);
            yt.copy_from_slice(theta);
            ay.copy_from_slice(&ax);
            momentum_t = 1.0;
            restarted = true;
            continue;
        }

        let mut diff = 0.0;
        let mut size = 0.0;
        for j in 0..m {
            diff += (nb[j] - b[j]).powi(2);
            size += nb[j] * nb[j];
        }
        if free_theta {
            for i in 0..n {
                diff += (nt[i] - theta[i]).powi(2);
                size += nt[i] * nt[i];
            }
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum_t * momentum_t).sqrt());
        let mom = (momentum_t - 1.0) / t_next;
        for j in 0..m {
            yb[j] = nb[j] + mom * (nb[j] - b[j]);
        }
        if free_theta {
            for i in 0..n {
                yt[i] = nt[i] + mom * (nt[i] - theta[i]);
            }
        }
        for i in 0..n {
            ay[i] = anew[i] + mom * (anew[i] - ax[i]);
        }
        b.copy_from_slice(&nb);
        if free_theta {
            theta.copy_from_slice(&nt);
        }
        ax.copy_from_slice(&anew);
        f_x = total_new;
        momentum_t = t_next;
        restarted = false;

        if diff <= settings.tol * settings.tol * size {
            converged = true;
            break;
        }
    }

    Outcome {
        iterations,
        converged,
    }
}

fn prox_step(v: &[f64], weights: &[f64], out: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    prox_into(v, weights, 1.0, out);
}
