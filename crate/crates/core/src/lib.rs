//! Zero-shot hashing.
//!
//! Learns a linear binary hash function `sgn(xᵀ W_img)` from images of *seen*
//! classes together with per-class semantic vectors, adapts it online to
//! images of *unseen* classes, and evaluates bit-packed Hamming retrieval.
//!
//! The training pipeline is:
//!
//! ```text
//! features, labels ──► kNN affinity + class graphs ──► combined Laplacian L
//! class attributes ──► M = (Y Yᵀ + βI)⁻¹ ──► C = I − YᵀMY + γL
//! C ──► thresholded eigenvectors ──► codes B ──► W_txt (closed form)
//!                                         └────► W_img (per-bit hinge loss)
//! ```
//!
//! Adaptation refines `W_img` on mini-batches of unlabelled unseen-class images
//! by pulling their codes toward the projected class prototypes `y_jᵀ W_txt`.

pub mod adapt;
pub mod codes;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod maxmargin;
pub mod protocol;
pub mod retrieval;
pub mod spectral;

pub use codes::CodeMatrix;
pub use dataset::{Bandwidth, Dataset, HashModel, HyperParams};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use retrieval::PackedCodes;
