#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pivotal_slope::rng::stream_rng;
use pivotal_slope::Dataset;
use rand::Rng;
use rand_distr::StandardNormal;

/// `sum_i gamma_i |v|_(i)`, computed by a plain sort.
pub fn sorted_norm(v: &[f64], gamma: &[f64]) -> f64 {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.partial_cmp(x).unwrap());
    a.iter().zip(gamma).map(|(x, g)| x * g).sum()
}

fn prox_objective(w: &[f64], v: &[f64], gamma: &[f64], t: f64) -> f64 {
    let fit: f64 = w.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fit + t * sorted_norm(w, gamma)
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    if d == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(d - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, d - 1);
            out.push(p);
        }
    }
    out
}

/// Brute-force sorted-l1 prox for small `d`. For every ordering of the
/// magnitudes and every split of that ordering into consecutive blocks, the
/// block means of `|v| - t gamma` (clipped at zero) give a candidate; the
/// candidate with the smallest prox objective wins. The minimizer is always
/// among the candidates, so the result is exact up to rounding.
pub fn prox_enumerate(v: &[f64], gamma: &[f64], t: f64) -> Vec<f64> {
    let d = v.len();
    let mut best = vec![0.0; d];
    let mut best_val = prox_objective(&best, v, gamma, t);
    for perm in permutations(d) {
        let a: Vec<f64> = perm.iter().enumerate().map(|(k, &i)| v[i].abs() - t * gamma[k]).collect();
        for mask in 0..(1u32 << d.saturating_sub(1)) {
            let mut z = vec![0.0; d];
            let mut start = 0;
            for end in 1..=d {
                if end == d || mask & (1 << (end - 1)) != 0 {
                    let mean = a[start..end].iter().sum::<f64>() / (end - start) as f64;
                    z[start..end].fill(mean.max(0.0));
                    start = end;
                }
            }
            if z.windows(2).any(|w| w[0] < w[1]) {
                continue;
            }
            let mut w = vec![0.0; d];
            for (k, &i) in perm.iter().enumerate() {
                w[i] = z[k] * v[i].signum();
            }
            let val = prox_objective(&w, v, gamma, t);
            if val < best_val {
                best_val = val;
                best = w;
            }
        }
    }
    best
}

/// `sqrt(Q) + ||beta||_lam + ||theta||_mu`, written out from scratch.
pub fn pivotal_loss(ds: &Dataset, beta: &[f64], theta: &[f64], lam: &[f64], mu: &[f64]) -> f64 {
    let n = ds.x.nrows();
    let b = DVector::from_column_slice(beta);
    let r = &ds.y - &ds.x * b - DVector::from_column_slice(theta) * (n as f64).sqrt();
    (r.norm_squared() / (2.0 * n as f64)).sqrt() + sorted_norm(beta, lam) + sorted_norm(theta, mu)
}

/// A subgradient of the sorted-l1 norm: the `k`-th largest magnitude gets
/// `gamma_k` with its sign.
fn sorted_subgradient(v: &[f64], gamma: &[f64], out: &mut [f64]) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().partial_cmp(&v[a].abs()).unwrap());
    for (k, &i) in order.iter().enumerate() {
        out[i] = gamma[k] * v[i].signum();
    }
}

/// Best loss found by subgradient descent with diminishing normalized steps
/// from several random starts.
pub fn subgradient_oracle(
    ds: &Dataset,
    lam: &[f64],
    mu: &[f64],
    starts: usize,
    iters: usize,
    seed: u64,
) -> f64 {
    let (n, p) = (ds.x.nrows(), ds.x.ncols());
    let sn = (n as f64).sqrt();
    let scale = 1.0 + ds.y.norm() / sn;
    let mut rng = stream_rng(seed, 99);
    let mut best = f64::INFINITY;
    let mut gb = vec![0.0; p];
    let mut gt = vec![0.0; n];
    for _ in 0..starts {
        let mut beta: Vec<f64> = (0..p).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut theta: Vec<f64> = (0..n).map(|_| 0.1 * scale * rng.sample::<f64, _>(StandardNormal)).collect();
        for k in 0..iters {
            let val = pivotal_loss(ds, &beta, &theta, lam, mu);
            best = best.min(val);
            let r = &ds.y
                - &ds.x * DVector::from_column_slice(&beta)
                - DVector::from_column_slice(&theta) * sn;
            let root_q = (r.norm_squared() / (2.0 * n as f64)).sqrt();
            sorted_subgradient(&beta, lam, &mut gb);
            sorted_subgradient(&theta, mu, &mut gt);
            if root_q > 0.0 {
                let xtr = ds.x.transpose() * &r;
                for j in 0..p {
                    gb[j] -= xtr[j] / (n as f64 * 2.0 * root_q);
                }
                for i in 0..n {
                    gt[i] -= r[i] / (sn * 2.0 * root_q);
                }
            }
            let g_norm = (gb.iter().chain(&gt).map(|g| g * g).sum::<f64>()).sqrt();
            if g_norm == 0.0 {
                break;
            }
            let step = 0.5 * scale / ((k + 1) as f64).sqrt() / g_norm;
            for j in 0..p {
                beta[j] -= step * gb[j];
            }
            for i in 0..n {
                theta[i] -= step * gt[i];
            }
        }
    }
    best
}

pub fn random_dataset(n: usize, p: usize, noise: f64, seed: u64) -> (Dataset, Vec<f64>) {
    let mut rng = stream_rng(seed, 98);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta: Vec<f64> = (0..p)
        .map(|j| if j < 2 { 2.0 * rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
        .collect();
    let mean = &x * DVector::from_column_slice(&beta);
    let y = DVector::from_fn(n, |i, _| mean[i] + noise * rng.sample::<f64, _>(StandardNormal));
    (Dataset::new(x, y).unwrap(), beta)
}

pub fn random_weights(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0)).collect();
    g.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if g[0] == 0.0 {
        g[0] = 1.0;
    }
    g
}
