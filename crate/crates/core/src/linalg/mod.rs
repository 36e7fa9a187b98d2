//! Dense linear algebra and statistics primitives.
//!
//! Everything downstream (SVCCA, the multiplicity metrics, the trainer)
//! is built on this module: a row-major `f64` matrix, a one-sided Jacobi
//! SVD, a cyclic Jacobi symmetric eigensolver, the inverse-square-root
//! whitener, variance-based rank truncation, and Pearson correlation.
//!
//! All routines are deterministic: identical inputs produce bit-identical
//! outputs, and singular-vector signs follow a fixed convention.

mod eigen;
mod matrix;
mod stats;
mod svd;

pub use eigen::{inv_sqrt_psd, sym_eigen, SymEigen};
pub use matrix::Matrix;
pub use stats::{mean, pearson, sample_std};
pub use svd::{svd, truncate_by_variance, SvdResult};

use core::fmt;

/// Errors from the linear-algebra layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// A matrix dimension was zero.
    EmptyMatrix,
    /// Backing storage length does not match `rows * cols`.
    BadDataLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    /// A NaN or infinity was found at the given position.
    NonFinite { row: usize, col: usize },
    /// Inner dimensions do not agree for a product or comparison.
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    /// Matrix expected to be symmetric differs at `(row, col)`.
    NotSymmetric { row: usize, col: usize, delta: f64 },
    /// Matrix expected to be PSD had a significantly negative eigenvalue.
    NotPositiveSemiDefinite { eigenvalue: f64 },
    /// Spectrum carried no variance (all singular values zero).
    NoVariance,
    /// Variance fraction outside `(0, 1]`.
    InvalidFraction { fraction: f64 },
    /// Singular values not sorted non-increasing or negative.
    UnsortedSpectrum { index: usize },
    /// Paired vectors differ in length, or are shorter than two entries.
    LengthMismatch { left: usize, right: usize },
    /// Correlation is undefined because one input is constant.
    ConstantInput { side: &'static str },
    /// An iterative routine failed to converge.
    NoConvergence { routine: &'static str },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::EmptyMatrix => write!(f, "matrix must have at least one row and column"),
            LinalgError::BadDataLength { rows, cols, len } => write!(
                f,
                "data length {len} does not match {rows}x{cols} = {}",
                rows * cols
            ),
            LinalgError::NonFinite { row, col } => {
                write!(f, "non-finite entry at ({row}, {col})")
            }
            LinalgError::DimensionMismatch { left, right } => write!(
                f,
                "dimension mismatch: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            LinalgError::NotSymmetric { row, col, delta } => write!(
                f,
                "matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {delta:e}"
            ),
            LinalgError::NotPositiveSemiDefinite { eigenvalue } => {
                write!(f, "matrix is not PSD: eigenvalue {eigenvalue:e}")
            }
            LinalgError::NoVariance => write!(f, "spectrum carries no variance to explain"),
            LinalgError::InvalidFraction { fraction } => {
                write!(f, "variance fraction {fraction} outside (0, 1]")
            }
            LinalgError::UnsortedSpectrum { index } => {
                write!(
                    f,
                    "singular values invalid (negative or increasing) at index {index}"
                )
            }
            LinalgError::LengthMismatch { left, right } => {
                write!(
                    f,
                    "vector lengths {left} and {right} unusable (need equal, >= 2)"
                )
            }
            LinalgError::ConstantInput { side } => {
                write!(f, "correlation undefined: {side} input is constant")
            }
            LinalgError::NoConvergence { routine } => {
                write!(f, "{routine} did not converge within the iteration budget")
            }
        }
    }
}

impl core::error::Error for LinalgError {}
