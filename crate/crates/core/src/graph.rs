//! Intra-modal similarity graphs and their Laplacians.
//!
//! `W^F` links each image to its k nearest neighbours with a Gaussian weight,
//! `W^intra` links images of the same class and `W^inter` images of different
//! classes. The training objective uses
//!
//! ```text
//! L = L^S − α L^inter,   L^S = laplacian(W^intra + W^F)
//! ```

use crate::dataset::{Bandwidth, HyperParams};
use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, relative_asymmetry, Matrix, SYMMETRY_TOL};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Affinities below this are flushed to zero.
pub const AFFINITY_FLOOR: f64 = 1e-300;

/// `N × N` matrix of squared Euclidean distances between the columns of `x`.
pub fn pairwise_sq_distances(x: &Matrix) -> Matrix {
    let n = x.ncols();
    let row = |p: usize| -> Vec<f64> {
        let xp = x.column(p);
        (0..n)
            .map(|q| {
                let xq = x.column(q);
                xp.iter().zip(xq.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..n).map(row).collect();
    Matrix::from_fn(n, n, |p, q| rows[p][q])
}

/// Indices of the `k` nearest other points of every point; ties go to the lower index.
pub fn knn_sets(dist: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = dist.nrows();
    (0..n)
        .map(|q| {
            let mut others: Vec<usize> = (0..n).filter(|&p| p != q).collect();
            let cmp = |a: &usize, b: &usize| dist[(q, *a)].total_cmp(&dist[(q, *b)]).then(a.cmp(b));
            if k < others.len() {
                others.select_nth_unstable_by(k, cmp);
                others.truncate(k);
            }
            others.sort_by(cmp);
            others
        })
        .collect()
}

fn check_knn(x: &Matrix, k: usize) -> Result<()> {
    ensure_finite(x, "features")?;
    if k == 0 || k >= x.ncols() {
        return Err(Error::invalid(format!(
            "knn must satisfy 1 <= k < N, got k={k} with N={}",
            x.ncols()
        )));
    }
    Ok(())
}

/// σ with σ² equal to the mean squared distance from each point to its k nearest neighbours.
pub fn auto_bandwidth(x: &Matrix, k: usize) -> Result<f64> {
    check_knn(x, k)?;
    let dist = pairwise_sq_distances(x);
    let sets = knn_sets(&dist, k);
    let total: f64 = sets
        .iter()
        .enumerate()
        .flat_map(|(q, set)| set.iter().map(move |&p| (q, p)))
        .map(|(q, p)| dist[(q, p)])
        .sum();
    let mean = total / (sets.len() * k) as f64;
    if mean > 0.0 {
        Ok(mean.sqrt())
    } else {
        // All neighbours coincide; any bandwidth gives weight 1.
        Ok(1.0)
    }
}

/// Gaussian kNN affinity `W^F` over the columns of `x`.
///
/// `W_pq = exp(−‖x_p − x_q‖² / σ²)` when either point is among the other's
/// k nearest neighbours, otherwise 0. The diagonal is 0.
pub fn knn_affinity(x: &Matrix, k: usize, sigma: f64) -> Result<Matrix> {
    check_knn(x, k)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let n = x.ncols();
    let dist = pairwise_sq_distances(x);
    let sets = knn_sets(&dist, k);
    let s2 = sigma * sigma;
    let mut w = Matrix::zeros(n, n);
    for (q, set) in sets.iter().enumerate() {
        for &p in set {
            let v = (-dist[(p, q)] / s2).exp();
            let v = if v < AFFINITY_FLOOR { 0.0 } else { v };
            w[(p, q)] = v;
            w[(q, p)] = v;
        }
    }
    Ok(w)
}

/// `W^intra`: 1 for distinct images of the same class.
pub fn intra_class_matrix(labels: &[usize]) -> Matrix {
    let n = labels.len();
    Matrix::from_fn(n, n, |p, q| {
        if p != q && labels[p] == labels[q] {
            1.0
        } else {
            0.0
        }
    })
}

/// `W^inter`: 1 for images of different classes.
pub fn inter_class_matrix(labels: &[usize]) -> Matrix {
    let n = labels.len();
    Matrix::from_fn(n, n, |p, q| if labels[p] != labels[q] { 1.0 } else { 0.0 })
}

/// `D − W` with `D_ii = Σ_j W_ij`.
pub fn laplacian(w: &Matrix) -> Result<Matrix> {
    if !w.is_square() {
        return Err(Error::dim(format!("affinity is {}x{}", w.nrows(), w.ncols())));
    }
    ensure_finite(w, "affinity")?;
    if w.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("affinity has negative entries"));
    }
    let asym = relative_asymmetry(w);
    if asym > SYMMETRY_TOL {
        return Err(Error::invalid(format!(
            "affinity is not symmetric (relative asymmetry {asym:.3e})"
        )));
    }
    let mut l = -w.clone();
    for (i, sum) in w.row_iter().map(|r| r.sum()).enumerate() {
        l[(i, i)] += sum;
    }
    Ok(l)
}

/// `L^S − α L^inter`.
pub fn combined_laplacian(ls: &Matrix, linter: &Matrix, alpha: f64) -> Result<Matrix> {
    if ls.shape() != linter.shape() {
        return Err(Error::dim(format!(
            "Laplacians differ in size: {:?} vs {:?}",
            ls.shape(),
            linter.shape()
        )));
    }
    Ok(ls - linter * alpha)
}

/// The graphs behind one training run.
#[derive(Debug, Clone)]
pub struct SimilarityGraphs {
    pub feature_affinity: Matrix,
    pub intra: Matrix,
    pub inter: Matrix,
    /// σ actually used for `feature_affinity`.
    pub sigma: f64,
}

impl SimilarityGraphs {
    /// Builds `W^F`, `W^intra` and `W^inter` for images `x` (columns) with `labels`.
    pub fn build(x: &Matrix, labels: &[usize], params: &HyperParams) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(Error::dim(format!(
                "{} labels for {} images",
                labels.len(),
                x.ncols()
            )));
        }
        let sigma = match params.sigma {
            Bandwidth::Fixed(s) => s,
            Bandwidth::Auto => auto_bandwidth(x, params.knn)?,
        };
        Ok(SimilarityGraphs {
            feature_affinity: knn_affinity(x, params.knn, sigma)?,
            intra: intra_class_matrix(labels),
            inter: inter_class_matrix(labels),
            sigma,
        })
    }

    /// `W^S = W^intra + W^F`.
    pub fn similarity(&self) -> Matrix {
        &self.intra + &self.feature_affinity
    }

    /// `L = L^S − α L^inter`.
    pub fn combined_laplacian(&self, alpha: f64) -> Result<Matrix> {
        let ls = laplacian(&self.similarity())?;
        let linter = laplacian(&self.inter)?;
        combined_laplacian(&ls, &linter, alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_neighbours_have_unit_affinity() {
        let x = Matrix::from_row_slice(1, 3, &[0.0, 0.0, 10.0]);
        let w = knn_affinity(&x, 1, 0.5).unwrap();
        assert_eq!(w[(0, 1)], 1.0);
        assert_eq!(w[(1, 0)], 1.0);
        assert_eq!(w[(0, 0)], 0.0);
    }

    #[test]
    fn distance_sigma_gives_exp_minus_one() {
        let x = Matrix::from_row_slice(2, 2, &[0.0, 0.3, 0.0, 0.4]);
        let w = knn_affinity(&x, 1, 0.5).unwrap();
        assert!((w[(0, 1)] - (-1.0f64).exp()).abs() < 1e-14);
        assert!((w[(0, 1)] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn non_neighbours_are_zero() {
        // 0 and 1 are mutual nearest neighbours, 3 pairs with 2; 0 and 3 are far apart.
        let x = Matrix::from_row_slice(1, 4, &[0.0, 0.1, 5.0, 5.2]);
        let w = knn_affinity(&x, 1, 1.0).unwrap();
        assert_eq!(w[(0, 3)], 0.0);
        assert_eq!(w[(1, 2)], 0.0);
        assert!(w[(0, 1)] > 0.0);
        assert!(w[(2, 3)] > 0.0);
    }

    #[test]
    fn union_of_neighbour_sets() {
        // Point 2's nearest neighbour is 1, but 1's nearest is 0: the pair (1,2) still links.
        let x = Matrix::from_row_slice(1, 3, &[0.0, 1.0, 2.5]);
        let w = knn_affinity(&x, 1, 10.0).unwrap();
        assert!(w[(1, 2)] > 0.0 && w[(2, 1)] > 0.0);
        assert_eq!(w[(0, 2)], 0.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = Matrix::from_row_slice(1, 3, &[0.0, -1.0, 1.0]);
        let sets = knn_sets(&pairwise_sq_distances(&x), 1);
        assert_eq!(sets[0], vec![1]);
    }

    #[test]
    fn tiny_affinities_underflow_to_zero() {
        let x = Matrix::from_row_slice(1, 2, &[0.0, 1e3]);
        let w = knn_affinity(&x, 1, 0.5).unwrap();
        assert_eq!(w[(0, 1)], 0.0);
    }

    #[test]
    fn knn_errors() {
        let x = Matrix::zeros(2, 3);
        assert!(knn_affinity(&x, 3, 1.0).is_err());
        assert!(knn_affinity(&x, 0, 1.0).is_err());
        assert!(knn_affinity(&x, 1, 0.0).is_err());
        let mut bad = x.clone();
        bad[(0, 0)] = f64::INFINITY;
        assert!(knn_affinity(&bad, 1, 1.0).is_err());
    }

    #[test]
    fn class_matrices() {
        let intra = intra_class_matrix(&[0, 0, 1]);
        assert_eq!(intra, Matrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 0., 0., 0., 0.]));
        assert_eq!(intra_class_matrix(&[0, 1, 2]), Matrix::zeros(3, 3));
        assert_eq!(
            intra_class_matrix(&[4, 4, 4]),
            Matrix::from_element(3, 3, 1.0) - Matrix::identity(3, 3)
        );

        assert_eq!(inter_class_matrix(&[0, 1]), Matrix::from_row_slice(2, 2, &[0., 1., 1., 0.]));
        assert_eq!(inter_class_matrix(&[2, 2, 2]), Matrix::zeros(3, 3));

        let labels = [0, 1, 1, 2, 0];
        let sum = intra_class_matrix(&labels) + inter_class_matrix(&labels) + Matrix::identity(5, 5);
        assert_eq!(sum, Matrix::from_element(5, 5, 1.0));
    }

    #[test]
    fn laplacian_examples() {
        let w = Matrix::from_row_slice(2, 2, &[0., 1., 1., 0.]);
        assert_eq!(laplacian(&w).unwrap(), Matrix::from_row_slice(2, 2, &[1., -1., -1., 1.]));
        assert_eq!(laplacian(&Matrix::zeros(3, 3)).unwrap(), Matrix::zeros(3, 3));
        let path = Matrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        assert_eq!(
            laplacian(&path).unwrap(),
            Matrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.])
        );
        let asym = Matrix::from_row_slice(2, 2, &[0., 1., 0., 0.]);
        assert!(laplacian(&asym).is_err());
    }

    #[test]
    fn combined_laplacian_examples() {
        let path = Matrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(combined_laplacian(&path, &path, 0.0).unwrap(), path);
        let l = combined_laplacian(&path, &path, 0.2).unwrap();
        assert!((l - &path * 0.8).norm() < 1e-15);
        assert_eq!(combined_laplacian(&path, &path, 1.0).unwrap(), Matrix::zeros(3, 3));
        assert!(combined_laplacian(&path, &Matrix::zeros(2, 2), 0.2).is_err());
    }

    #[test]
    fn auto_bandwidth_matches_mean_knn_distance() {
        let x = Matrix::from_row_slice(1, 3, &[0.0, 1.0, 3.0]);
        // Nearest neighbours: 0→1 (1), 1→0 (1), 2→1 (4).
        let s = auto_bandwidth(&x, 1).unwrap();
        assert!((s * s - 2.0).abs() < 1e-12);
    }
}
