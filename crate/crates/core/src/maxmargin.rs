//! Per-bit linear max-margin classifiers.
//!
//! Column `k` of `W_img` minimizes
//!
//! ```text
//! ‖w‖² + λ Σ_i max(0, 1 − b_ik · x_iᵀ w)
//! ```
//!
//! with no intercept. The solver is full-batch projected subgradient descent
//! with step `η_t = η₀ / (1 + t)`, `η₀ = N / Σ_i ‖x_i‖²`, keeping the best
//! iterate. Iterates are projected onto the ball `‖w‖² ≤ λN`, which contains
//! the minimizer because the objective at `w = 0` is `λN`.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::codes::CodeMatrix;
use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix};

pub const EPOCHS: usize = 500;

/// Seeds of the random restarts run after the zero start.
pub const RESTART_SEEDS: [u64; 2] = [0x6d61_7267_696e_0001, 0x6d61_7267_696e_0002];

/// One trained bit.
#[derive(Debug, Clone, PartialEq)]
pub struct BitClassifier {
    pub weights: DVector<f64>,
    pub lambda: f64,
    pub objective: f64,
    /// Best objective seen after each epoch of the winning run (index 0 is the start point).
    pub trace: Vec<f64>,
}

fn check_bits(x: &Matrix, bits: &[f64], lambda: f64) -> Result<()> {
    if bits.len() != x.ncols() {
        return Err(Error::dim(format!(
            "{} bits for {} samples",
            bits.len(),
            x.ncols()
        )));
    }
    if let Some(i) = bits.iter().position(|&b| b != 1.0 && b != -1.0) {
        return Err(Error::invalid(format!("bit {i} is {}, expected ±1", bits[i])));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// `‖w‖² + λ Σ_i max(0, 1 − b_i x_iᵀ w)`.
pub fn hinge_objective(x: &Matrix, bits: &[f64], w: &DVector<f64>, lambda: f64) -> f64 {
    let margins = x.tr_mul(w);
    let hinge: f64 = margins
        .iter()
        .zip(bits)
        .map(|(m, b)| (1.0 - b * m).max(0.0))
        .sum();
    w.norm_squared() + lambda * hinge
}

/// `Σ_k` of the per-bit objectives of `w` against `codes`.
pub fn total_objective(x: &Matrix, codes: &CodeMatrix, w: &Matrix, lambda: f64) -> f64 {
    (0..codes.bits())
        .map(|k| {
            let col = w.column(k).into_owned();
            hinge_objective(x, &codes.column(k), &col, lambda)
        })
        .sum()
}

/// Samples pre-multiplied by their bit, `z_i = b_i x_i`, as columns.
struct SignedSamples {
    z: Matrix,
    lambda: f64,
    eta0: f64,
    radius_sq: f64,
}

impl SignedSamples {
    fn new(x: &Matrix, bits: &[f64], lambda: f64) -> Self {
        let mut z = x.clone();
        for (mut col, &b) in z.column_iter_mut().zip(bits) {
            col *= b;
        }
        let n = x.ncols() as f64;
        let trace = x.norm_squared();
        SignedSamples {
            z,
            lambda,
            eta0: if trace > 0.0 { n / trace } else { 0.0 },
            radius_sq: lambda * n,
        }
    }

    fn objective(&self, w: &DVector<f64>) -> f64 {
        let margins = self.z.tr_mul(w);
        let hinge: f64 = margins.iter().map(|m| (1.0 - m).max(0.0)).sum();
        w.norm_squared() + self.lambda * hinge
    }

    fn project(&self, w: &mut DVector<f64>) {
        let nsq = w.norm_squared();
        if nsq > self.radius_sq {
            *w *= (self.radius_sq / nsq).sqrt();
        }
    }

    /// One run from `start`; returns the best iterate, its objective and the best-so-far trace.
    fn descend(&self, start: DVector<f64>, epochs: usize) -> (DVector<f64>, f64, Vec<f64>) {
        let mut w = start;
        self.project(&mut w);
        let mut best_obj = self.objective(&w);
        let mut best = w.clone();
        let mut trace = Vec::with_capacity(epochs + 1);
        trace.push(best_obj);
        if self.eta0 == 0.0 {
            // All-zero features: the hinge term is constant and only the regularizer moves.
            let zero = DVector::zeros(w.len());
            let obj = self.objective(&zero);
            trace.push(obj);
            return (zero, obj, trace);
        }
        let mut active = DVector::zeros(self.z.ncols());
        for t in 0..epochs {
            let margins = self.z.tr_mul(&w);
            for (a, m) in active.iter_mut().zip(margins.iter()) {
                *a = if *m < 1.0 { 1.0 } else { 0.0 };
            }
            let mut grad = &w * 2.0;
            grad.gemv(-self.lambda, &self.z, &active, 1.0);
            let eta = self.eta0 / (1.0 + t as f64);
            w.axpy(-eta, &grad, 1.0);
            self.project(&mut w);
            let obj = self.objective(&w);
            if obj < best_obj {
                best_obj = obj;
                best.copy_from(&w);
            }
            trace.push(best_obj);
        }
        (best, best_obj, trace)
    }
}

/// Fits one bit from the zero vector and from two seeded random starts, keeping the best.
pub fn train_bit(x: &Matrix, bits: &[f64], lambda: f64) -> Result<BitClassifier> {
    ensure_finite(x, "features")?;
    check_bits(x, bits, lambda)?;
    let problem = SignedSamples::new(x, bits, lambda);
    let d = x.nrows();
    let scale = problem.eta0.sqrt();

    let mut starts = vec![DVector::zeros(d)];
    for seed in RESTART_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        starts.push(DVector::from_fn(d, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scale
        }));
    }

    let mut winner: Option<BitClassifier> = None;
    for start in starts {
        let (weights, objective, trace) = problem.descend(start, EPOCHS);
        if winner.as_ref().is_none_or(|w| objective < w.objective) {
            winner = Some(BitClassifier {
                weights,
                lambda,
                objective,
                trace,
            });
        }
    }
    Ok(winner.expect("at least one start"))
}

/// Continues optimizing one bit from `start` (single run).
pub fn refine_bit(
    x: &Matrix,
    bits: &[f64],
    lambda: f64,
    start: &DVector<f64>,
) -> Result<BitClassifier> {
    ensure_finite(x, "features")?;
    check_bits(x, bits, lambda)?;
    if start.len() != x.nrows() {
        return Err(Error::dim(format!(
            "start has length {}, features have dimension {}",
            start.len(),
            x.nrows()
        )));
    }
    let problem = SignedSamples::new(x, bits, lambda);
    let (weights, objective, trace) = problem.descend(start.clone(), EPOCHS);
    Ok(BitClassifier {
        weights,
        lambda,
        objective,
        trace,
    })
}

fn check_codes(x: &Matrix, codes: &CodeMatrix) -> Result<()> {
    if codes.len() != x.ncols() {
        return Err(Error::dim(format!(
            "{} codes for {} samples",
            codes.len(),
            x.ncols()
        )));
    }
    Ok(())
}

fn per_bit<F>(k: usize, fit: F) -> Result<Vec<BitClassifier>>
where
    F: Fn(usize) -> Result<BitClassifier> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let fitted: Vec<Result<BitClassifier>> = (0..k).into_par_iter().map(fit).collect();
    #[cfg(not(feature = "parallel"))]
    let fitted: Vec<Result<BitClassifier>> = (0..k).map(fit).collect();
    fitted.into_iter().collect()
}

fn assemble(d: usize, fitted: &[BitClassifier]) -> Matrix {
    let mut w = Matrix::zeros(d, fitted.len());
    for (k, c) in fitted.iter().enumerate() {
        w.set_column(k, &c.weights);
    }
    w
}

/// Trains every column of `W_img` (`d_x × K`) independently.
pub fn train_all(x: &Matrix, codes: &CodeMatrix, lambda: f64) -> Result<(Matrix, Vec<BitClassifier>)> {
    check_codes(x, codes)?;
    let fitted = per_bit(codes.bits(), |k| train_bit(x, &codes.column(k), lambda))?;
    Ok((assemble(x.nrows(), &fitted), fitted))
}

/// Warm-started refit of every column from `start`.
pub fn refine_all(
    x: &Matrix,
    codes: &CodeMatrix,
    lambda: f64,
    start: &Matrix,
) -> Result<(Matrix, Vec<BitClassifier>)> {
    check_codes(x, codes)?;
    if start.shape() != (x.nrows(), codes.bits()) {
        return Err(Error::dim(format!(
            "start projection is {:?}, expected ({}, {})",
            start.shape(),
            x.nrows(),
            codes.bits()
        )));
    }
    let fitted = per_bit(codes.bits(), |k| {
        refine_bit(x, &codes.column(k), lambda, &start.column(k).into_owned())
    })?;
    Ok((assemble(x.nrows(), &fitted), fitted))
}

/// `sign(Xᵀ W)` with `sign(0) = +1`; one code row per column of `x`.
pub fn encode(x: &Matrix, w: &Matrix) -> Result<CodeMatrix> {
    if x.nrows() != w.nrows() {
        return Err(Error::dim(format!(
            "features have dimension {}, projection expects {}",
            x.nrows(),
            w.nrows()
        )));
    }
    Ok(CodeMatrix::from_signs(&x.tr_mul(w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d() -> (Matrix, Vec<f64>) {
        (Matrix::from_row_slice(1, 2, &[-1.0, 1.0]), vec![-1.0, 1.0])
    }

    /// Dense grid minimizer of `w² + 2λ max(0, 1 − w)`.
    fn grid_oracle(lambda: f64) -> f64 {
        (0..=40_000)
            .map(|i| -2.0 + i as f64 * 1e-4)
            .min_by(|a, b| {
                let f = |w: f64| w * w + 2.0 * lambda * (1.0 - w).max(0.0);
                f(*a).total_cmp(&f(*b))
            })
            .unwrap()
    }

    #[test]
    fn one_dimensional_minimizers() {
        let (x, b) = one_d();
        for (lambda, expected) in [(0.5, 0.5), (2.0, 1.0)] {
            let oracle = grid_oracle(lambda);
            assert!((oracle - expected).abs() < 1e-3);
            let fit = train_bit(&x, &b, lambda).unwrap();
            assert!(
                (fit.weights[0] - oracle).abs() < 1e-2,
                "lambda={lambda}: w={} oracle={oracle}",
                fit.weights[0]
            );
        }
    }

    #[test]
    fn zero_features_give_zero_weights() {
        let x = Matrix::zeros(3, 4);
        let fit = train_bit(&x, &[1.0, -1.0, 1.0, 1.0], 0.2).unwrap();
        assert_eq!(fit.weights, DVector::zeros(3));
        assert!((fit.objective - 0.2 * 4.0).abs() < 1e-12);
    }

    #[test]
    fn separable_two_d_is_fit_exactly() {
        let x = Matrix::from_row_slice(
            2,
            8,
            &[
                2.0, 1.5, 3.0, 2.5, -2.0, -1.0, -3.0, -2.2, //
                1.0, -0.5, 0.2, 2.0, -1.0, 0.5, -0.3, -2.0,
            ],
        );
        let bits: Vec<f64> = (0..8).map(|i| if i < 4 { 1.0 } else { -1.0 }).collect();
        let fit = train_bit(&x, &bits, 0.2).unwrap();
        let w = Matrix::from_column_slice(2, 1, fit.weights.as_slice());
        let codes = encode(&x, &w).unwrap();
        assert_eq!(codes.column(0), bits);
    }

    #[test]
    fn best_so_far_is_monotone_and_beats_zero() {
        let x = Matrix::from_fn(5, 40, |i, j| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        let bits: Vec<f64> = (0..40).map(|j| if (j * 3) % 5 < 2 { 1.0 } else { -1.0 }).collect();
        let fit = train_bit(&x, &bits, 0.2).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.objective <= 0.2 * 40.0);
        assert!((hinge_objective(&x, &bits, &fit.weights, 0.2) - fit.objective).abs() < 1e-9);
    }

    #[test]
    fn sample_order_does_not_matter() {
        let x = Matrix::from_fn(3, 12, |i, j| (((i + 1) * (j + 3)) % 7) as f64 - 3.0);
        let bits: Vec<f64> = (0..12).map(|j| if j % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let perm: Vec<usize> = (0..12).rev().collect();
        let xp = x.select_columns(&perm);
        let bp: Vec<f64> = perm.iter().map(|&i| bits[i]).collect();
        let a = train_bit(&x, &bits, 0.2).unwrap();
        let b = train_bit(&xp, &bp, 0.2).unwrap();
        assert!((a.weights - b.weights).norm() < 1e-9);
    }

    #[test]
    fn rejects_non_binary_bits() {
        let x = Matrix::zeros(1, 2);
        assert!(matches!(train_bit(&x, &[1.0, 0.0], 0.2), Err(Error::InvalidInput(_))));
        assert!(matches!(train_bit(&x, &[1.0], 0.2), Err(Error::Dimension(_))));
    }

    #[test]
    fn train_all_decomposes_per_bit() {
        let x = Matrix::from_fn(4, 30, |i, j| ((i * 5 + j * 3) % 9) as f64 - 4.0);
        let col: Vec<i8> = (0..30).map(|j| if j % 4 < 2 { 1 } else { -1 }).collect();
        let other: Vec<i8> = (0..30).map(|j| if j % 5 < 3 { 1 } else { -1 }).collect();

        // K = 1 reduces to train_bit.
        let single = CodeMatrix::from_rows(&col.iter().map(|&b| vec![b]).collect::<Vec<_>>()).unwrap();
        let (w1, _) = train_all(&x, &single, 0.2).unwrap();
        let fit = train_bit(&x, &single.column(0), 0.2).unwrap();
        assert_eq!(w1.column(0).into_owned(), fit.weights);

        // Duplicated code column gives duplicated weights; totals add up.
        let rows: Vec<Vec<i8>> = (0..30).map(|j| vec![col[j], other[j], col[j]]).collect();
        let codes = CodeMatrix::from_rows(&rows).unwrap();
        let (w, fitted) = train_all(&x, &codes, 0.2).unwrap();
        assert_eq!(w.column(0), w.column(2));
        let total = total_objective(&x, &codes, &w, 0.2);
        let sum: f64 = fitted.iter().map(|f| f.objective).sum();
        assert!((total - sum).abs() < 1e-9 * total.max(1.0));
    }

    #[test]
    fn refine_never_worsens() {
        let x = Matrix::from_fn(4, 30, |i, j| ((i * 5 + j * 3) % 9) as f64 - 4.0);
        let bits: Vec<f64> = (0..30).map(|j| if j % 4 < 2 { 1.0 } else { -1.0 }).collect();
        let first = train_bit(&x, &bits, 0.2).unwrap();
        let again = refine_bit(&x, &bits, 0.2, &first.weights).unwrap();
        assert!(again.objective <= first.objective);
    }

    #[test]
    fn encode_examples() {
        let x = Matrix::from_column_slice(2, 1, &[2.0, -3.0]);
        let codes = encode(&x, &Matrix::identity(2, 2)).unwrap();
        assert_eq!(codes.row_bits(0), vec![true, false]);

        let zero = encode(&x, &Matrix::zeros(2, 3)).unwrap();
        assert!(zero.as_matrix().iter().all(|&v| v == 1.0));
        assert!(encode(&x, &Matrix::zeros(3, 1)).is_err());
    }
}
