//! Bayesian optimal experimental design by stochastic gradient ascent on the
//! expected information gain, with unbiased randomized multilevel Monte Carlo
//! gradient estimators.

pub mod diagnostics;
pub mod eig;
pub mod error;
pub mod fdcheck;
pub mod mlmc;
pub mod model;
pub mod optim;
pub mod parallel;
pub mod problems;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Dims, ProblemModel};
