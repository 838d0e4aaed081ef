use serde::{Deserialize, Serialize};

use super::BoxDomain;
use crate::error::{check_len, Result};

/// Learning-rate rule `a_t = c / (t + 1)`; satisfies `Σ a_t = ∞`, `Σ a_t² < ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub c: f64,
}

impl Schedule {
    pub fn rate(&self, t: u64) -> f64 {
        self.c / (t as f64 + 1.0)
    }
}

/// Projected Robbins–Monro ascent with a full-trajectory Polyak–Ruppert mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RobbinsMonroState {
    current: Vec<f64>,
    iterate_sum: Vec<f64>,
    t: u64,
    schedule: Schedule,
}

impl RobbinsMonroState {
    pub fn new(initial: Vec<f64>, schedule: Schedule) -> Self {
        Self {
            iterate_sum: initial.clone(),
            current: initial,
            t: 0,
            schedule,
        }
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    /// Mean of `ξ_0, …, ξ_t`.
    pub fn averaged(&self) -> Vec<f64> {
        let n = (self.t + 1) as f64;
        self.iterate_sum.iter().map(|s| s / n).collect()
    }

    pub fn step(&mut self, grad: &[f64], domain: &BoxDomain) -> Result<()> {
        check_len("gradient", self.current.len(), grad.len())?;
        let rate = self.schedule.rate(self.t);
        for (x, g) in self.current.iter_mut().zip(grad) {
            *x += rate * g;
        }
        domain.project_in_place(&mut self.current);
        for (s, x) in self.iterate_sum.iter_mut().zip(&self.current) {
            *s += x;
        }
        self.t += 1;
        Ok(())
    }
}
