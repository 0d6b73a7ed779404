//! Planning cross-validation experiments by minimizing the variance of the
//! CV estimate of generalization error.

pub mod combinatorics;
pub mod error;
pub mod logistic;
pub mod loss;
pub mod montecarlo;
pub mod normal;
pub mod quadrature;
pub mod regression;
pub mod split;
pub mod stats;
pub mod variance;

pub use error::{Error, Result};
pub use nalgebra;
