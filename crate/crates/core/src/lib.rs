//! Sparse deep ReLU network estimators on sparse-grid hat bases.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod evalsuite;
pub mod loss;
pub mod quadrature;
pub mod relu;
pub mod sparse_grid;

pub use error::{Result, SdrnError};
pub use estimator::{FitConfig, SdrnModel};
pub use loss::LossSpec;
pub use sparse_grid::{BasisId, SparseGridBasis};
