use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Sign with the tie rule used for every code in the crate: `sign(0) = +1`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `N × K` matrix with every entry exactly `−1` or `+1`. Row `i` is the code of item `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix(Matrix);

impl CodeMatrix {
    /// Validates that `m` is a ±1 matrix.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::dim("code matrix must be non-empty"));
        }
        if let Some(pos) = m.iter().position(|&v| v != 1.0 && v != -1.0) {
            let (r, c) = (pos % m.nrows(), pos / m.nrows());
            return Err(Error::invalid(format!(
                "code entry ({r}, {c}) = {} is not ±1",
                m[(r, c)]
            )));
        }
        Ok(CodeMatrix(m))
    }

    /// Entrywise sign of `m`.
    pub fn from_signs(m: &Matrix) -> Self {
        CodeMatrix(m.map(sign))
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::dim("ragged code rows"));
        }
        CodeMatrix::new(Matrix::from_fn(rows.len(), k, |i, j| f64::from(rows[i][j])))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn bits(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `true` where the entry is `+1`.
    pub fn row_bits(&self, i: usize) -> Vec<bool> {
        self.0.row(i).iter().map(|&v| v > 0.0).collect()
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.0[(i, k)]
    }

    /// Column `k` as a ±1 vector.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.0.column(k).iter().copied().collect()
    }

    /// Codes restricted to the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> CodeMatrix {
        CodeMatrix(self.0.select_rows(rows))
    }

    /// Fraction of entries where `self` and `other` agree.
    pub fn agreement(&self, other: &CodeMatrix) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape());
        let same = self.0.iter().zip(other.0.iter()).filter(|(a, b)| a == b).count();
        same as f64 / self.0.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_plus_one() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(sign(-1e-300), -1.0);
    }

    #[test]
    fn rejects_non_binary_entries() {
        let m = Matrix::from_row_slice(1, 2, &[1.0, 0.5]);
        assert!(CodeMatrix::new(m).is_err());
        assert!(CodeMatrix::from_rows(&[vec![1, -1], vec![1]]).is_err());
    }

    #[test]
    fn agreement_counts_entries() {
        let a = CodeMatrix::from_rows(&[vec![1, 1], vec![-1, 1]]).unwrap();
        let b = CodeMatrix::from_rows(&[vec![1, -1], vec![-1, 1]]).unwrap();
        assert_eq!(a.agreement(&b), 0.75);
    }
}
