//! Dense numerics shared by every other module.

mod linalg;
mod matrix;
mod rng;
mod simplex;

pub use linalg::{symmetric_eigen, thin_svd, ThinSvd};
pub use matrix::{weighted_frobenius, DenseMatrix};
pub use rng::{sample_simplex, sample_unit_nonneg, RngStream};
pub use simplex::{project_col_stochastic, project_row_stochastic, project_simplex, ProbVector};
