//! Difference-based estimation of the long-run variance (LRV) of a time
//! series whose mean may contain trends and change points.
//!
//! The building blocks are difference statistics `D_i = Σ_j d_j X_{i-jh}`
//! formed from a normalized difference sequence `{d_j}`. Kernel-smoothed
//! products of difference statistics estimate the LRV without requiring the
//! mean to be constant. On top of the estimators the crate provides
//! MSE-optimal bandwidth selection, a rough centering procedure for obvious
//! jumps and slopes, change-point tests and simultaneous confidence bands
//! normalized by the robust LRV, and a Monte Carlo lab for the reference
//! experiments.
//!
//! Modules:
//! - [`diffseq`]: difference sequences (binomial, local, MSE-optimal).
//! - [`kernels`]: compactly supported kernels, their analytic constants, and
//!   the induced differencing kernel.
//! - [`estimators`]: the kernel and subsampling LRV estimators, univariate
//!   and matrix-valued.
//! - [`selection`]: plug-in bandwidth selection and the suggested estimator.
//! - [`rcp`]: rough centering (jump and slope removal).
//! - [`inference`]: KS and moving-sum break tests, trend smoothing, SCBs.
//! - [`simlab`]: data generators and experiment harness.

pub mod diffseq;
pub mod estimators;
pub mod inference;
pub mod kernels;
pub mod rcp;
pub mod selection;
pub mod simlab;

mod polyroots;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum LrvError {
    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration is internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// The series is too short for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    /// A numerical procedure failed to produce a reliable result.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, LrvError>;
