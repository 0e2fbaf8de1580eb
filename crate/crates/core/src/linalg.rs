//! Small dense linear-algebra helpers for symmetric PSD matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest accepted condition number of a Jacobi-scaled information matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Why a symmetric matrix was not invertible.
#[derive(Debug, Clone, PartialEq)]
pub enum Singular {
    /// Diagonal entry is zero, negative or non-finite.
    Diagonal(usize),
    /// Scaled condition number exceeds the guard.
    Condition(f64),
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix with a conditioning guard.
///
/// The matrix is Jacobi-scaled to unit diagonal before the check so that mixed
/// physical units do not dominate the condition number.
pub fn guarded_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, Singular> {
    let n = m.nrows();
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = m[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Singular::Diagonal(i));
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]) * scale[i] * scale[j];
        }
    }
    let eig = SymmetricEigen::new(s.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > MAX_CONDITION || !max.is_finite() {
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        return Err(Singular::Condition(cond));
    }
    let inv_s = match s.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
            &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose()
        }
    };
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = inv_s[(i, j)] * scale[i] * scale[j];
        }
    }
    Ok(symmetrize(&out))
}

/// A square-root factor `L` with `L Lᵀ = m` for symmetric PSD `m`.
///
/// Uses Cholesky when it succeeds, else a clamped eigen-decomposition so that
/// zero-variance directions are supported.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if let Some(ch) = sym.clone().cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix.
pub fn psd_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.amax();
    let tol = max * 1e-12 * m.nrows() as f64;
    let inv = eig
        .eigenvalues
        .map(|v| if v > tol { 1.0 / v } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Extracts the sub-matrix on the given row/column indices.
pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Log-density of a zero-mean Gaussian at `r` with covariance `s`.
///
/// Returns `None` when `s` is not positive definite.
pub fn gaussian_log_density(r: &DVector<f64>, s: &DMatrix<f64>) -> Option<(f64, f64)> {
    let ch = symmetrize(s).cholesky()?;
    let sol = ch.solve(r);
    let maha = r.dot(&sol);
    let log_det = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let n = r.len() as f64;
    Some((
        -0.5 * (maha + log_det + n * (2.0 * std::f64::consts::PI).ln()),
        maha,
    ))
}
