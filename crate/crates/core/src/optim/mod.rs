//! Stochastic gradient ascent: box projection, Robbins–Monro with
//! Polyak–Ruppert averaging, AMSGrad, and the iteration driver.
//!
//! Everything here maximizes. Minimization textbooks flip the sign of the
//! update.

mod amsgrad;
mod driver;
mod robbins_monro;

pub use amsgrad::{AmsGradConfig, AmsGradState};
pub use driver::{optimize, optimize_with, OptimizeConfig, OptimizerConfig, Trace, TraceRow};
pub use robbins_monro::{RobbinsMonroState, Schedule};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Axis-aligned feasible set; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("box upper bounds", lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::config(format!(
                    "box coordinate {i}: lower bound {lo} must be below upper bound {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// The same interval in every coordinate.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn project_in_place(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Euclidean projection onto a box: a componentwise clamp.
pub fn project(x: &[f64], domain: &BoxDomain) -> Result<Vec<f64>> {
    check_len("projected vector", domain.dim(), x.len())?;
    let mut out = x.to_vec();
    domain.project_in_place(&mut out);
    Ok(out)
}
