//! Thin helpers over nalgebra for symmetric positive-definite matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{numeric, usage, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Cholesky factorization, failing with a numeric error when `m` is not PD.
pub fn cholesky(m: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(usage(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    Cholesky::new(m.clone()).ok_or_else(|| numeric("matrix is not positive definite"))
}

pub fn log_det_spd(m: &Matrix) -> Result<f64> {
    let chol = cholesky(m)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

pub fn inverse_spd(m: &Matrix) -> Result<Matrix> {
    let inv = cholesky(m)?.inverse();
    Ok(symmetrize(&inv))
}

/// `(m + mᵀ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Diagonal part of a square matrix as a matrix.
pub fn diag_part(m: &Matrix) -> Matrix {
    Matrix::from_diagonal(&m.diagonal())
}

/// Sum of log diagonal entries; all must be strictly positive.
pub fn log_det_diagonal(m: &Matrix) -> Result<f64> {
    let mut acc = 0.0;
    for d in m.diagonal().iter() {
        if !(*d > 0.0) {
            return Err(numeric(format!("non-positive diagonal entry {d}")));
        }
        acc += d.ln();
    }
    Ok(acc)
}

/// Block-diagonal part of `m` under a partition of its indices into consecutive blocks.
pub fn block_diag_part(m: &Matrix, block_sizes: &[usize]) -> Result<Matrix> {
    let total: usize = block_sizes.iter().sum();
    if total != m.nrows() || block_sizes.contains(&0) {
        return Err(usage(format!("block sizes {block_sizes:?} do not partition dimension {}", m.nrows())));
    }
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    let mut start = 0;
    for &size in block_sizes {
        out.view_mut((start, start), (size, size)).copy_from(&m.view((start, start), (size, size)));
        start += size;
    }
    Ok(out)
}

/// Eigenvalues of the symmetric pencil `(numerator, denominator)` with `denominator` PD,
/// i.e. the stationary values of `bᵀ N b / bᵀ D b`, sorted ascending.
///
/// Computed as the spectrum of `L⁻¹ N_sym L⁻ᵀ` where `D = L Lᵀ`.
pub fn generalized_rayleigh_extremes(numerator: &Matrix, denominator: &Matrix) -> Result<(f64, f64)> {
    let values = generalized_eigenvalues(numerator, denominator)?;
    Ok((values[0], values[values.len() - 1]))
}

pub fn generalized_eigenvalues(numerator: &Matrix, denominator: &Matrix) -> Result<Vec<f64>> {
    if numerator.shape() != denominator.shape() {
        return Err(usage("pencil matrices differ in shape"));
    }
    let chol = cholesky(denominator)?;
    let l = chol.l();
    let n_sym = symmetrize(numerator);
    let left = l.solve_lower_triangular(&n_sym).ok_or_else(|| numeric("singular Cholesky factor"))?;
    let reduced = l.solve_lower_triangular(&left.transpose()).ok_or_else(|| numeric("singular Cholesky factor"))?;
    let mut values: Vec<f64> = SymmetricEigen::new(symmetrize(&reduced)).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(values)
}

/// Symmetric eigenvalues, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * (1.0 + m.amax())
}
