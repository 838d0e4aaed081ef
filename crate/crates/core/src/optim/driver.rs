//! The outer optimization loop: estimate, step, project, record.

use serde::{Deserialize, Serialize};

use super::{AmsGradConfig, AmsGradState, BoxDomain, RobbinsMonroState, Schedule};
use crate::eig::{estimate_eig, EigConfig};
use crate::error::{check_len, Error, Result};
use crate::mlmc::{estimate_gradient, GradientConfig};
use crate::model::ProblemModel;
use crate::parallel::Workers;
use crate::rng::{Phase, StreamKey};
use crate::stats::sq_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    /// `a_t = c/(t+1)`; with `polyak` the reported design is the running mean.
    Rm { c: f64, polyak: bool },
    Amsgrad(AmsGradConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub gradient: GradientConfig,
    pub optimizer: OptimizerConfig,
    pub domain: BoxDomain,
    pub initial: Vec<f64>,
    pub max_iters: u64,
    pub seed: u64,
    /// Evaluate the EIG every this many steps (0 disables).
    pub eig_every: u64,
    pub eig: Option<EigConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: u64,
    /// Inner likelihood evaluations spent on gradients up to this row.
    pub cost_cumulative: u64,
    pub design: Vec<f64>,
    /// Mean of `ξ_0, …, ξ_t`.
    pub averaged: Vec<f64>,
    /// Norm of the gradient estimate that produced this row.
    pub grad_norm: Option<f64>,
    pub eig: Option<f64>,
    pub eig_std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub final_design: Vec<f64>,
    pub averaged_design: Vec<f64>,
    pub total_cost: u64,
    pub laplace_fallbacks: usize,
}

enum State {
    Rm(RobbinsMonroState),
    Ams(AmsGradState),
}

impl State {
    fn current(&self) -> &[f64] {
        match self {
            State::Rm(s) => s.current(),
            State::Ams(s) => s.current(),
        }
    }

    fn step(&mut self, grad: &[f64], domain: &BoxDomain) -> Result<()> {
        match self {
            State::Rm(s) => s.step(grad, domain),
            State::Ams(s) => s.step(grad, domain),
        }
    }
}

fn validate(config: &OptimizeConfig, dim: usize) -> Result<()> {
    check_len("initial design", dim, config.initial.len())?;
    check_len("design bounds", dim, config.domain.dim())?;
    if !config.domain.contains(&config.initial) {
        return Err(Error::Domain {
            what: "initial design",
            value: config.initial.clone(),
        });
    }
    if config.gradient.n_outer == 0 {
        return Err(Error::config("n_outer must be positive"));
    }
    if config.eig_every > 0 && config.eig.is_none() {
        return Err(Error::config("periodic EIG requested without an EIG estimator"));
    }
    match config.optimizer {
        OptimizerConfig::Rm { c, .. } if !(c > 0.0 && c.is_finite()) => {
            Err(Error::config(format!("learning-rate constant c = {c} must be positive")))
        }
        OptimizerConfig::Amsgrad(a)
            if !(a.alpha > 0.0
                && (0.0..1.0).contains(&a.beta1)
                && (0.0..1.0).contains(&a.beta2)
                && a.eps > 0.0) =>
        {
            Err(Error::config(format!("invalid AMSGrad settings {a:?}")))
        }
        _ => Ok(()),
    }
}

/// Runs `max_iters` steps, handing each of the `max_iters + 1` rows to `sink`
/// as soon as it is produced.
pub fn optimize_with<M, F>(
    model: &M,
    config: &OptimizeConfig,
    workers: &Workers,
    mut sink: F,
) -> Result<Trace>
where
    M: ProblemModel,
    F: FnMut(&TraceRow) -> Result<()>,
{
    let dim = model.dims().design;
    validate(config, dim)?;
    let mut state = match config.optimizer {
        OptimizerConfig::Rm { c, .. } => {
            State::Rm(RobbinsMonroState::new(config.initial.clone(), Schedule { c }))
        }
        OptimizerConfig::Amsgrad(a) => State::Ams(AmsGradState::new(config.initial.clone(), a)),
    };
    let report_averaged = matches!(config.optimizer, OptimizerConfig::Rm { polyak: true, .. });
    let mut sum = config.initial.clone();
    let mut cost = 0u64;
    let mut fallbacks = 0usize;
    let mut grad_norm = None;

    for t in 0..=config.max_iters {
        if t > 0 {
            let key = StreamKey::new(config.seed, Phase::Gradient, t - 1);
            let g = estimate_gradient(model, state.current(), &config.gradient, key, workers)?;
            state.step(&g.grad, &config.domain)?;
            for (s, x) in sum.iter_mut().zip(state.current()) {
                *s += x;
            }
            cost += g.total_cost;
            fallbacks += g.laplace_fallbacks;
            grad_norm = Some(sq_norm(&g.grad).sqrt());
        }
        let averaged: Vec<f64> = sum.iter().map(|s| s / (t + 1) as f64).collect();
        let (eig, eig_std_error) = match (&config.eig, config.eig_every) {
            (Some(ec), every) if every > 0 && t % every == 0 => {
                let at = if report_averaged { &averaged[..] } else { state.current() };
                let key = StreamKey::new(config.seed, Phase::EigTrace, t);
                let e = estimate_eig(model, at, ec, key, workers)?;
                (Some(e.value), Some(e.std_error))
            }
            _ => (None, None),
        };
        sink(&TraceRow {
            t,
            cost_cumulative: cost,
            design: state.current().to_vec(),
            averaged,
            grad_norm,
            eig,
            eig_std_error,
        })?;
    }
    let averaged_design: Vec<f64> =
        sum.iter().map(|s| s / (config.max_iters + 1) as f64).collect();
    Ok(Trace {
        rows: Vec::new(),
        final_design: state.current().to_vec(),
        averaged_design,
        total_cost: cost,
        laplace_fallbacks: fallbacks,
    })
}

/// Like [`optimize_with`] but keeps every row in memory.
pub fn optimize<M: ProblemModel>(model: &M, config: &OptimizeConfig, workers: &Workers) -> Result<Trace> {
    let mut rows = Vec::with_capacity(config.max_iters as usize + 1);
    let mut trace = optimize_with(model, config, workers, |row| {
        rows.push(row.clone());
        Ok(())
    })?;
    trace.rows = rows;
    Ok(trace)
}
