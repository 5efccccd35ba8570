//! Common factor model, maximum-likelihood exploratory factor analysis and
//! residual-component analysis, with a Monte Carlo harness measuring how
//! strongly the first principal component of the residual correlations
//! correlates with the common factors.

pub mod cli;
pub mod datagen;
pub mod efa;
pub mod error;
pub mod linalg;
pub mod model;
pub mod plot;
pub mod report;
pub mod residuals;
pub mod seed;
pub mod sim;
pub mod theorems;

pub use error::{Error, Result};
