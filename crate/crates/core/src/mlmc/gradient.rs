//! Outer-sample averages of `ψ` (nested Monte Carlo) or `Δψ_ℓ / w_ℓ`
//! (randomized MLMC) as estimates of `∇U(ξ)`.

use serde::{Deserialize, Serialize};

use super::correction::{Construction, Sampler};
use super::weights::LevelWeights;
use crate::error::{Error, Result};
use crate::model::ProblemModel;
use crate::parallel::Workers;
use crate::problems::{LaplaceStep, ProposalKind};
use crate::rng::StreamKey;
use crate::stats::{sq_norm, VecMoments};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GradientEstimator {
    /// Biased nested estimator with `m` inner samples per outer sample.
    StandardMc { m: usize },
    /// Unbiased single-term randomized MLMC.
    Mlmc {
        weights: LevelWeights,
        #[serde(default)]
        construction: Construction,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientConfig {
    pub estimator: GradientEstimator,
    pub proposal: ProposalKind,
    pub laplace_step: LaplaceStep,
    pub n_outer: usize,
}

impl GradientConfig {
    pub fn new(estimator: GradientEstimator, proposal: ProposalKind, n_outer: usize) -> Self {
        Self {
            estimator,
            proposal,
            laplace_step: LaplaceStep::default(),
            n_outer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub grad: Vec<f64>,
    /// Componentwise standard error of `grad`.
    pub std_error: Vec<f64>,
    pub n_outer: usize,
    /// Inner likelihood evaluations summed over outer samples.
    pub total_cost: u64,
    /// Mean squared norm of the per-sample contributions.
    pub per_sample_sq_norm_mean: f64,
    pub laplace_fallbacks: usize,
}

/// One outer sample's contribution to the gradient average.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub value: Vec<f64>,
    pub cost: u64,
    pub level: Option<u32>,
    pub laplace_fallback: bool,
}

/// Draws the contribution of outer sample `index` from its own stream.
pub fn gradient_sample<M: ProblemModel>(
    sampler: &Sampler<'_, M>,
    estimator: &GradientEstimator,
    key: StreamKey,
    index: u64,
) -> Result<GradientSample> {
    let mut rng = key.rng(index);
    match estimator {
        GradientEstimator::StandardMc { m } => {
            let (value, laplace_fallback) = sampler.psi_standard(*m, &mut rng)?;
            Ok(GradientSample {
                value,
                cost: *m as u64,
                level: None,
                laplace_fallback,
            })
        }
        GradientEstimator::Mlmc {
            weights,
            construction,
        } => {
            let level = weights.sample_level(&mut rng)?;
            let c = sampler.delta_psi(level, weights.m0(), *construction, &mut rng)?;
            let w = weights.weight(level);
            Ok(GradientSample {
                value: c.delta.iter().map(|d| d / w).collect(),
                cost: c.cost,
                level: Some(level),
                laplace_fallback: c.laplace_fallback,
            })
        }
    }
}

/// Averages `n_outer` independent contributions. The result is identical
/// for every worker count.
pub fn estimate_gradient<M: ProblemModel>(
    model: &M,
    design: &[f64],
    config: &GradientConfig,
    key: StreamKey,
    workers: &Workers,
) -> Result<GradientEstimate> {
    if config.n_outer == 0 {
        return Err(Error::config("n_outer must be positive"));
    }
    if let GradientEstimator::StandardMc { m: 0 } = config.estimator {
        return Err(Error::config("inner sample count must be positive"));
    }
    let sampler =
        Sampler::new(model, design, config.proposal)?.with_laplace_step(config.laplace_step);
    let samples = workers.map_indexed(config.n_outer, |i| {
        gradient_sample(&sampler, &config.estimator, key, i as u64)
    })?;
    Ok(reduce(design.len(), &samples))
}

fn reduce(dim: usize, samples: &[GradientSample]) -> GradientEstimate {
    let mut moments = VecMoments::new(dim);
    let mut total_cost = 0u64;
    let mut sq = 0.0;
    let mut fallbacks = 0;
    for s in samples {
        moments.push(&s.value);
        total_cost += s.cost;
        sq += sq_norm(&s.value);
        fallbacks += usize::from(s.laplace_fallback);
    }
    GradientEstimate {
        grad: moments.mean(),
        std_error: moments.std_error(),
        n_outer: samples.len(),
        total_cost,
        per_sample_sq_norm_mean: sq / samples.len() as f64,
        laplace_fallbacks: fallbacks,
    }
}
