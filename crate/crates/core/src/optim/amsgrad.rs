use serde::{Deserialize, Serialize};

use super::BoxDomain;
use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmsGradConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for AmsGradConfig {
    fn default() -> Self {
        Self {
            alpha: 0.004,
            beta1: 0.9,
            beta2: 0.999,
            eps: default_eps(),
        }
    }
}

/// AMSGrad ascent state (no bias correction).
#[derive(Debug, Clone, PartialEq)]
pub struct AmsGradState {
    current: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    v_hat: Vec<f64>,
    config: AmsGradConfig,
    t: u64,
}

impl AmsGradState {
    pub fn new(initial: Vec<f64>, config: AmsGradConfig) -> Self {
        let d = initial.len();
        Self {
            current: initial,
            m: vec![0.0; d],
            v: vec![0.0; d],
            v_hat: vec![0.0; d],
            config,
            t: 0,
        }
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn v_hat(&self) -> &[f64] {
        &self.v_hat
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, grad: &[f64], domain: &BoxDomain) -> Result<()> {
        check_len("gradient", self.current.len(), grad.len())?;
        let AmsGradConfig {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.config;
        for i in 0..grad.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            self.v_hat[i] = self.v_hat[i].max(self.v[i]);
            self.current[i] += alpha * self.m[i] / (self.v_hat[i].sqrt() + eps);
        }
        domain.project_in_place(&mut self.current);
        self.t += 1;
        Ok(())
    }
}
