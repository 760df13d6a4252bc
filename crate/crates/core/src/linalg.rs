//! Dense linear algebra on `f64` matrices.
//!
//! Everything is built on `nalgebra::DMatrix`. Tolerances are relative to the
//! Frobenius norm so they do not depend on the scale of the input.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative asymmetry accepted by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Full spectrum of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    /// Unit-norm columns aligned with `eigenvalues`.
    pub eigenvectors: Matrix,
}

impl EigenResult {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let scaled = &self.eigenvectors * Matrix::from_diagonal(&self.eigenvalues);
        scaled * self.eigenvectors.transpose()
    }
}

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

/// Rejects empty matrices and non-finite entries.
pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::dim(format!("{what} is empty ({}x{})", m.nrows(), m.ncols())));
    }
    if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % m.nrows(), pos / m.nrows());
        return Err(Error::invalid(format!(
            "{what} has a non-finite entry at ({r}, {c})"
        )));
    }
    Ok(())
}

pub fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `‖A − Aᵀ‖_F / max(1, ‖A‖_F)`.
pub fn relative_asymmetry(a: &Matrix) -> f64 {
    let diff = a - a.transpose();
    diff.norm() / a.norm().max(1.0)
}

pub fn ensure_symmetric(a: &Matrix, what: &str) -> Result<()> {
    ensure_square(a, what)?;
    ensure_finite(a, what)?;
    let asym = relative_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::invalid(format!(
            "{what} is not symmetric (relative asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

/// `(A + Aᵀ) / 2`, exactly symmetric.
pub fn symmetrize(a: &Matrix) -> Matrix {
    let mut s = a.clone();
    let n = s.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Full eigendecomposition of a symmetric matrix, eigenvalues ascending.
pub fn symmetric_eig(a: &Matrix) -> Result<EigenResult> {
    ensure_symmetric(a, "eigen input")?;
    let n = a.nrows();
    let eig = SymmetricEigen::try_new(symmetrize(a), f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("symmetric eigensolver did not converge"))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::numerical("degenerate eigenvector"));
        }
        eigenvectors.set_column(dst, &(col / norm));
    }
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Solves `A X = B` for symmetric positive definite `A` by Cholesky.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    ensure_symmetric(a, "SPD system matrix")?;
    ensure_finite(b, "right-hand side")?;
    if b.nrows() != a.nrows() {
        return Err(Error::dim(format!(
            "right-hand side has {} rows, system is {}x{}",
            b.nrows(),
            a.nrows(),
            a.ncols()
        )));
    }
    let chol = Cholesky::new(symmetrize(a)).ok_or_else(|| {
        Error::numerical("matrix is not positive definite (Cholesky factorization failed)")
    })?;
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("SPD solve produced non-finite values"));
    }
    Ok(x)
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_spd(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    solve_spd(a, &Matrix::identity(n, n)).map(|m| symmetrize(&m))
}
