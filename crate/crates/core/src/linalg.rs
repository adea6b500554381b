//! Small dense helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, TrfeError};
use crate::scalar::Real;

pub fn symmetrize<R: Real>(m: &DMatrix<R>) -> DMatrix<R> {
    (m + m.transpose()) * R::lit(0.5)
}

/// Largest absolute entry.
pub fn max_abs<R: Real>(m: &DMatrix<R>) -> R {
    m.iter().fold(R::zero(), |acc, v| acc.max(v.abs()))
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues<R: Real>(m: &DMatrix<R>) -> DVector<R> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut v: Vec<R> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    DVector::from_vec(v)
}

pub fn min_eigenvalue<R: Real>(m: &DMatrix<R>) -> R {
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().copied().fold(R::infinity(), R::min)
}

/// Rejects non-square, asymmetric (beyond `1e-10` relative) or non-positive-definite input.
pub fn check_spd<R: Real>(m: &DMatrix<R>, name: &str) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(TrfeError::InvalidModel(format!("{name} must be square and nonempty")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(TrfeError::InvalidModel(format!("{name} has non-finite entries")));
    }
    let scale = max_abs(m).max(R::one());
    if max_abs(&(m - m.transpose())) > R::lit(1e-10) * scale {
        return Err(TrfeError::InvalidModel(format!("{name} is not symmetric")));
    }
    let lmin = min_eigenvalue(m);
    if lmin <= R::zero() {
        return Err(TrfeError::InvalidModel(format!(
            "{name} is not positive definite (min eigenvalue {lmin})"
        )));
    }
    Ok(())
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky<R: Real>(m: &DMatrix<R>) -> Result<DMatrix<R>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| TrfeError::NumericalConditioning("cholesky of non-SPD matrix".into()))
}

/// Symmetric square root `V diag(√λ) Vᵀ` of a PSD matrix; tiny negative
/// eigenvalues are clipped to zero.
pub fn sym_sqrt<R: Real>(m: &DMatrix<R>) -> DMatrix<R> {
    sym_fn(m, |l| l.max(R::zero()).sqrt())
}

/// Applies `f` to the eigenvalues of the symmetric part.
pub fn sym_fn<R: Real>(m: &DMatrix<R>, f: impl Fn(R) -> R) -> DMatrix<R> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Inverse of an SPD matrix via Cholesky.
pub fn spd_inverse<R: Real>(m: &DMatrix<R>) -> Result<DMatrix<R>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| TrfeError::NumericalConditioning("inverse of non-SPD matrix".into()))
}
