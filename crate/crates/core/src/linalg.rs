//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm2(a: &[f64]) -> f64 {
    norm2_sq(a).sqrt()
}

/// Power iteration estimate of the largest eigenvalue of `X^T X`, i.e. the
/// squared spectral norm of `X`.
///
/// Starts from a fixed deterministic vector; stops when the relative change of
/// the Rayleigh quotient drops below `tol`.
pub fn spectral_norm_sq(x: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let p = x.ncols();
    if p == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(p, |i, _| 1.0 + ((i * 7919) % 113) as f64 / 113.0);
    v /= v.norm();
    let mut xv = DVector::zeros(x.nrows());
    let mut w = DVector::zeros(p);
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        xv.gemv(1.0, x, &v, 0.0);
        w.gemv_tr(1.0, x, &xv, 0.0);
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v.copy_from(&w);
        v /= wn;
        let done = (next - estimate).abs() <= tol * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// Symmetric square root through the eigendecomposition. Fails unless the
/// matrix is symmetric positive definite.
pub fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(m)?;
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidArgument(
            "matrix is not positive definite".into(),
        ));
    }
    let root = eig.eigenvalues.map(f64::sqrt);
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&root) * q.transpose())
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument("matrix is not symmetric".into()));
            }
        }
    }
    Ok(())
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_matches_eigendecomposition() {
        let x = DMatrix::from_fn(30, 8, |i, j| ((i * 31 + j * 17) % 11) as f64 - 5.0);
        let gram = x.transpose() * &x;
        let top = *sym_eigenvalues(&gram).last().unwrap();
        let est = spectral_norm_sq(&x, 500, 1e-14);
        assert!((est - top).abs() / top < 1e-8, "{est} vs {top}");
    }

    #[test]
    fn sqrt_roundtrip_and_rejection() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let r = sym_sqrt(&m).unwrap();
        assert!((&r * &r - &m).amax() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(sym_sqrt(&bad).is_err());
    }
}
