//! Sorted-l1 norm `||v||_w = sum_i w_i |v|_(i)`, its dual norm and its
//! proximal operator.
//!
//! `|v|_(i)` is the i-th largest absolute entry of `v`, and the weights `w` are
//! non-increasing and non-negative. Every penalty of the estimator is of this
//! form.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// A non-increasing, non-negative, finite list of penalty weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightSequence(Vec<f64>);

impl WeightSequence {
    /// Checks the invariants; monotonicity is compared exactly.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyWeights);
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFiniteWeight { index: i });
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight { index: i });
            }
            if i > 0 && w > weights[i - 1] {
                return Err(Error::NotMonotone { index: i });
            }
        }
        Ok(Self(weights))
    }

    /// Constant sequence of length `len`.
    pub fn constant(value: f64, len: usize) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    /// Multiplies every weight by `k >= 0`.
    pub fn scaled(&self, k: f64) -> Self {
        debug_assert!(k >= 0.0 && k.is_finite());
        Self(self.0.iter().map(|w| w * k).collect())
    }

    /// The first `len` weights. A vector that is zero outside `len` chosen
    /// coordinates has the same norm under the truncated sequence.
    pub fn truncated(&self, len: usize) -> Self {
        Self(self.0[..len.min(self.0.len())].to_vec())
    }

    /// `sum_{i <= k} w_i^2`.
    pub fn prefix_sq_sum(&self, k: usize) -> f64 {
        self.0.iter().take(k).map(|w| w * w).sum()
    }
}

impl TryFrom<Vec<f64>> for WeightSequence {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightSequence> for Vec<f64> {
    fn from(w: WeightSequence) -> Self {
        w.0
    }
}

pub fn validate(weights: &[f64]) -> Result<WeightSequence> {
    WeightSequence::new(weights.to_vec())
}

/// Absolute values sorted in decreasing order.
fn sorted_abs_desc(v: &[f64]) -> Vec<f64> {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    a
}

pub fn norm_eval(v: &[f64], gamma: &WeightSequence) -> Result<f64> {
    check_len("sorted-l1 norm", gamma.len(), v.len())?;
    Ok(norm_unchecked(v, gamma.as_slice()))
}

pub(crate) fn norm_unchecked(v: &[f64], gamma: &[f64]) -> f64 {
    sorted_abs_desc(v)
        .iter()
        .zip(gamma)
        .map(|(a, g)| a * g)
        .sum()
}

/// Dual norm: `max_k (sum_{j<=k} |u|_(j)) / (sum_{j<=k} w_j)`.
pub fn dual_norm_eval(u: &[f64], gamma: &WeightSequence) -> Result<f64> {
    check_len("sorted-l1 dual norm", gamma.len(), u.len())?;
    if gamma.first() <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    Ok(dual_unchecked(u, gamma.as_slice()))
}

pub(crate) fn dual_unchecked(u: &[f64], gamma: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut best: f64 = 0.0;
    for (a, g) in sorted_abs_desc(u).iter().zip(gamma) {
        num += a;
        den += g;
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    best
}

/// Proximal operator of `t * ||.||_gamma`.
pub fn prox(v: &[f64], gamma: &WeightSequence, t: f64) -> Result<Vec<f64>> {
    check_len("sorted-l1 prox", gamma.len(), v.len())?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "prox scale must be positive, got {t}"
        )));
    }
    let mut out = vec![0.0; v.len()];
    prox_into(v, gamma.as_slice(), t, &mut out);
    Ok(out)
}

/// Stack-based pool-adjacent-violators on the sorted magnitudes.
///
/// With `a` the magnitudes sorted decreasingly, the solution is the
/// non-increasing isotonic fit of `a - t*gamma`, clipped at zero, mapped back
/// through the sort permutation with the original signs.
pub(crate) fn prox_into(v: &[f64], gamma: &[f64], t: f64, out: &mut [f64]) {
    let d = v.len();
    let mut order: Vec<usize> = (0..d).collect();
    // stable: equal magnitudes keep index order
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()));

    // blocks of the sorted sequence: (start, len, sum)
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(d);
    for (k, &idx) in order.iter().enumerate() {
        blocks.push((k, 1, v[idx].abs() - t * gamma[k]));
        // merge while the previous block's mean does not exceed the last one's
        while blocks.len() >= 2 {
            let (_, l1, s1) = blocks[blocks.len() - 1];
            let (s0, l0, sum0) = blocks[blocks.len() - 2];
            if sum0 / l0 as f64 <= s1 / l1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0, l0 + l1, sum0 + s1);
            } else {
                break;
            }
        }
    }
    for (start, len, sum) in blocks {
        let value = (sum / len as f64).max(0.0);
        for &idx in &order[start..start + len] {
            out[idx] = if v[idx] < 0.0 { -value } else { value };
        }
    }
}
