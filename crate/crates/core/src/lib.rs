//! Soft state aggregation of Markov chains by atomic-regularized
//! least squares over stochastic factorizations.

pub mod chain;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod objective;
pub mod palm;
pub mod rank;

pub use error::{Error, Result};
