//! Monte Carlo estimates of the expected information gain `U(ξ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlmc::{LevelWeights, Sampler};
use crate::model::ProblemModel;
use crate::parallel::Workers;
use crate::problems::{LaplaceStep, ProposalKind};
use crate::rng::StreamKey;
use crate::stats::Moments;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EigEstimator {
    /// Nested estimator `log ρ − log ϱ_M`, biased low by `O(1/M)`.
    Nested { m: usize },
    /// Unbiased randomized MLMC on the log evidence.
    Mlmc { weights: LevelWeights },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigConfig {
    pub estimator: EigEstimator,
    pub proposal: ProposalKind,
    pub laplace_step: LaplaceStep,
    pub n_outer: usize,
}

impl EigConfig {
    pub fn new(estimator: EigEstimator, proposal: ProposalKind, n_outer: usize) -> Self {
        Self {
            estimator,
            proposal,
            laplace_step: LaplaceStep::default(),
            n_outer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_outer: usize,
    pub total_inner_cost: u64,
    pub laplace_fallbacks: usize,
}

pub fn estimate_eig<M: ProblemModel>(
    model: &M,
    design: &[f64],
    config: &EigConfig,
    key: StreamKey,
    workers: &Workers,
) -> Result<EigEstimate> {
    if config.n_outer == 0 {
        return Err(Error::config("n_outer must be positive"));
    }
    if let EigEstimator::Nested { m: 0 } = config.estimator {
        return Err(Error::config("inner sample count must be positive"));
    }
    let sampler =
        Sampler::new(model, design, config.proposal)?.with_laplace_step(config.laplace_step);
    let samples = workers.map_indexed(config.n_outer, |i| {
        let mut rng = key.rng(i as u64);
        match &config.estimator {
            EigEstimator::Nested { m } => {
                let (v, fb) = sampler.eig_nested_term(*m, &mut rng)?;
                Ok((v, *m as u64, fb))
            }
            EigEstimator::Mlmc { weights } => {
                let level = weights.sample_level(&mut rng)?;
                let (v, fb) = sampler.eig_correction(level, weights.m0(), &mut rng)?;
                Ok((v / weights.weight(level), weights.inner_count(level), fb))
            }
        }
    })?;
    let mut moments = Moments::default();
    let mut cost = 0;
    let mut fallbacks = 0;
    for (v, c, fb) in samples {
        moments.push(v);
        cost += c;
        fallbacks += usize::from(fb);
    }
    Ok(EigEstimate {
        value: moments.mean(),
        std_error: moments.std_error(),
        n_outer: config.n_outer,
        total_inner_cost: cost,
        laplace_fallbacks: fallbacks,
    })
}
