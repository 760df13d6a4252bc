//! Online adaptation of `W_img` to unseen classes.
//!
//! For a mini-batch `X` (`d_x × N_test`) and unseen-class prototypes
//! `P = Y_nuᵀ W_txt` (`n_u × K`), each iteration
//!
//! 1. weighs every sample against every prototype, `U_ij = (1 + cos(b_i, p_j)) / 2`,
//! 2. updates the codes, `B* = sgn(D⁻¹ (U P + λ₁ F))` with `D = diag(U 1)`,
//! 3. updates the projection, `W* = W_img − λ₁ / (2 β₁ N_test) · T`,
//! 4. re-thresholds, `B* = sgn(Xᵀ W*)`,
//!
//! until `B*` stops changing. `F` and `T` collect the samples that violate
//! the unit margin under the current `W*`.

use crate::codes::CodeMatrix;
use crate::dataset::{HashModel, HyperParams};
use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix};
use crate::maxmargin::encode;

pub const MAX_ITERATIONS: usize = 10;

/// `P = Y_nuᵀ W_txt`, one prototype code per unseen class (rows).
pub fn class_prototypes(y_nu: &Matrix, w_txt: &Matrix) -> Result<Matrix> {
    if y_nu.nrows() != w_txt.nrows() {
        return Err(Error::dim(format!(
            "unseen attributes have dimension {}, W_txt expects {}",
            y_nu.nrows(),
            w_txt.nrows()
        )));
    }
    Ok(y_nu.tr_mul(w_txt))
}

/// `U_ij = (1 + cos(sgn(x_iᵀ W*), p_j)) / 2`, in `[0, 1]`.
pub fn weight_matrix(x: &Matrix, w_star: &Matrix, prototypes: &Matrix) -> Result<Matrix> {
    if prototypes.ncols() != w_star.ncols() {
        return Err(Error::dim(format!(
            "prototypes have {} bits, projection has {}",
            prototypes.ncols(),
            w_star.ncols()
        )));
    }
    let norms: Vec<f64> = prototypes.row_iter().map(|r| r.norm()).collect();
    if let Some(j) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::invalid(format!("prototype of unseen class {j} is the zero vector")));
    }
    let codes = encode(x, w_star)?;
    let code_norm = (codes.bits() as f64).sqrt();
    let dots = codes.as_matrix() * prototypes.transpose();
    Ok(Matrix::from_fn(dots.nrows(), dots.ncols(), |i, j| {
        let cos = (dots[(i, j)] / (code_norm * norms[j])).clamp(-1.0, 1.0);
        0.5 * (1.0 + cos)
    }))
}

fn margins(codes: &CodeMatrix, w_star: &Matrix, x: &Matrix) -> Result<Matrix> {
    if x.nrows() != w_star.nrows() || codes.len() != x.ncols() || codes.bits() != w_star.ncols() {
        return Err(Error::dim(format!(
            "codes {}x{}, projection {:?}, batch {:?} do not agree",
            codes.len(),
            codes.bits(),
            w_star.shape(),
            x.shape()
        )));
    }
    Ok(x.tr_mul(w_star))
}

/// `F_ik = −(W*_k)ᵀ x_i` where `b_ik (W*_k)ᵀ x_i < 1`, else 0.
pub fn hinge_indicator(codes: &CodeMatrix, w_star: &Matrix, x: &Matrix) -> Result<Matrix> {
    let proj = margins(codes, w_star, x)?;
    Ok(Matrix::from_fn(proj.nrows(), proj.ncols(), |i, k| {
        if codes.get(i, k) * proj[(i, k)] < 1.0 {
            -proj[(i, k)]
        } else {
            0.0
        }
    }))
}

/// `B* = sgn(D⁻¹ (U P + λ₁ F))`.
pub fn update_codes(u: &Matrix, prototypes: &Matrix, f: &Matrix, lambda1: f64) -> Result<CodeMatrix> {
    if u.ncols() != prototypes.nrows() || f.shape() != (u.nrows(), prototypes.ncols()) {
        return Err(Error::dim(format!(
            "U {:?}, P {:?}, F {:?} do not agree",
            u.shape(),
            prototypes.shape(),
            f.shape()
        )));
    }
    let mut target = u * prototypes + f * lambda1;
    for (i, mut row) in target.row_iter_mut().enumerate() {
        let degree: f64 = u.row(i).sum();
        if degree.is_nan() || degree <= 0.0 {
            return Err(Error::numerical(format!(
                "sample {i} has zero total weight to every prototype"
            )));
        }
        row /= degree;
    }
    Ok(CodeMatrix::from_signs(&target))
}

/// `T_k = Σ_i −b_ik x_i` over samples with `b_ik (W*_k)ᵀ x_i < 1`.
pub fn subgradient_t(codes: &CodeMatrix, w_star: &Matrix, x: &Matrix) -> Result<Matrix> {
    let proj = margins(codes, w_star, x)?;
    let mut weights = Matrix::zeros(proj.nrows(), proj.ncols());
    for i in 0..proj.nrows() {
        for k in 0..proj.ncols() {
            let b = codes.get(i, k);
            if b * proj[(i, k)] < 1.0 {
                weights[(i, k)] = -b;
            }
        }
    }
    Ok(x * weights)
}

/// `W* = W_img − λ₁ / (2 β₁ N_test) · T`.
pub fn update_projection(
    w_img: &Matrix,
    t: &Matrix,
    lambda1: f64,
    beta1: f64,
    n_test: usize,
) -> Result<Matrix> {
    if !(beta1 > 0.0 && beta1.is_finite()) {
        return Err(Error::invalid(format!("beta1 must be positive, got {beta1}")));
    }
    if n_test == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if w_img.shape() != t.shape() {
        return Err(Error::dim(format!(
            "W_img {:?} and T {:?} differ",
            w_img.shape(),
            t.shape()
        )));
    }
    let step = lambda1 / (2.0 * beta1 * n_test as f64);
    Ok(w_img - t * step)
}

/// Outcome of adapting to one mini-batch.
#[derive(Debug, Clone)]
pub struct Adapted {
    /// The input model with `w_img` replaced by `W*`.
    pub model: HashModel,
    pub codes: CodeMatrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Adapts `model` to one mini-batch `x_test` of unseen-class images.
///
/// `y_nu` holds the unseen class attributes as columns. The returned model's
/// `w_img` is the adapted projection, ready to seed the next batch.
pub fn adapt(model: &HashModel, x_test: &Matrix, y_nu: &Matrix, params: &HyperParams) -> Result<Adapted> {
    if x_test.ncols() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    ensure_finite(x_test, "batch features")?;
    if y_nu.ncols() == 0 {
        return Err(Error::invalid("no unseen classes to adapt to"));
    }
    if x_test.nrows() != model.dim_x() {
        return Err(Error::dim(format!(
            "batch has dimension {}, model expects {}",
            x_test.nrows(),
            model.dim_x()
        )));
    }
    let prototypes = class_prototypes(y_nu, &model.w_txt)?;
    let n_test = x_test.ncols();

    let base = &model.w_img;
    let mut w_star = base.clone();
    let mut codes = encode(x_test, &w_star)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let u = weight_matrix(x_test, &w_star, &prototypes)?;
        let f = hinge_indicator(&codes, &w_star, x_test)?;
        let target = update_codes(&u, &prototypes, &f, params.lambda1)?;
        let t = subgradient_t(&target, &w_star, x_test)?;
        w_star = update_projection(base, &t, params.lambda1, params.beta1, n_test)?;
        let next = encode(x_test, &w_star)?;
        let unchanged = next == codes;
        codes = next;
        if unchanged {
            converged = true;
            break;
        }
    }

    let mut adapted = model.clone();
    adapted.w_img = w_star;
    adapted.adapted = true;
    Ok(Adapted {
        model: adapted,
        codes,
        iterations,
        converged,
    })
}
