//! Small dense linear-algebra and log-space helpers.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff below which a symmetric matrix is treated as
/// rank deficient in [`pinv_symmetric`].
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-12;

/// `log Σ exp(xᵢ)`, returning `-∞` for an empty slice or when every term is `-∞`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Returns `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Moore–Penrose inverse of a symmetric matrix via its eigendecomposition.
/// Eigenvalues with `|λ| ≤ 1e-12·max|λ|` are treated as zero.
pub fn pinv_symmetric(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Input(format!("pinv of non-square {}x{} matrix", n, a.ncols())));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("pinv input contains non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if lmax == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let cutoff = PINV_RELATIVE_CUTOFF * lmax;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() <= cutoff {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.transpose()) / lam;
    }
    Ok(symmetrize(&out))
}

/// Smallest eigenvalue of a symmetric matrix (0 for empty).
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Spectral norm (largest |eigenvalue|) of a symmetric matrix.
pub fn spectral_norm_symmetric(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `log det` of a symmetric positive definite matrix; `None` if it is not
/// numerically positive definite.
pub fn log_det_spd(a: &DMatrix<f64>) -> Option<f64> {
    if a.nrows() == 0 {
        return Some(0.0);
    }
    let chol = nalgebra::Cholesky::new(symmetrize(a))?;
    let l = chol.l();
    let ld: f64 = l.diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    ld.is_finite().then_some(ld)
}
