//! Empirical decay of `E‖Δψ_ℓ‖²` across levels.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mlmc::{Construction, Sampler};
use crate::model::ProblemModel;
use crate::parallel::Workers;
use crate::problems::{LaplaceStep, ProposalKind};
use crate::rng::StreamKey;
use crate::stats::{linear_fit, sq_norm};

/// Below this many samples per level the fitted slope is reported but flagged.
pub const MIN_RELIABLE_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayConfig {
    pub m0: u64,
    pub max_level: u32,
    pub samples_per_level: usize,
    pub construction: Construction,
    pub proposal: ProposalKind,
    pub laplace_step: LaplaceStep,
    /// Inclusive level range of the regression.
    pub fit_range: (u32, u32),
}

impl DecayConfig {
    pub fn new(max_level: u32, samples_per_level: usize) -> Self {
        Self {
            m0: 1,
            max_level,
            samples_per_level,
            construction: Construction::Antithetic,
            proposal: ProposalKind::Prior,
            laplace_step: LaplaceStep::default(),
            fit_range: (1, max_level),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub level: u32,
    pub mean_sq_psi: f64,
    pub mean_sq_delta: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    /// Negated least-squares slope of `log₂ E‖Δψ_ℓ‖²` against `ℓ`.
    pub beta_hat: f64,
    pub fit_range: (u32, u32),
    pub reliable: bool,
}

pub fn decay_study<M: ProblemModel>(
    model: &M,
    design: &[f64],
    config: &DecayConfig,
    seed: u64,
    workers: &Workers,
) -> Result<DecayReport> {
    let (lo, hi) = config.fit_range;
    if config.max_level < 2 {
        return Err(Error::config("decay study needs at least levels 0..=2"));
    }
    if config.samples_per_level == 0 {
        return Err(Error::config("samples_per_level must be positive"));
    }
    if lo >= hi || hi > config.max_level {
        return Err(Error::config(format!(
            "fit range {lo}..={hi} must be increasing and within 0..={}",
            config.max_level
        )));
    }
    let sampler =
        Sampler::new(model, design, config.proposal)?.with_laplace_step(config.laplace_step);
    let mut rows = Vec::with_capacity(config.max_level as usize + 1);
    for level in 0..=config.max_level {
        let key = StreamKey::new(seed, crate::rng::Phase::Decay, u64::from(level));
        let pairs = workers.map_indexed(config.samples_per_level, |i| {
            let c = sampler.delta_psi(level, config.m0, config.construction, &mut key.rng(i as u64))?;
            Ok((sq_norm(&c.fine_psi), sq_norm(&c.delta)))
        })?;
        let n = pairs.len();
        let (sp, sd) = pairs
            .iter()
            .fold((0.0, 0.0), |(a, b), (p, d)| (a + p, b + d));
        rows.push(DecayRow {
            level,
            mean_sq_psi: sp / n as f64,
            mean_sq_delta: sd / n as f64,
            n,
        });
    }
    let fit: Vec<(f64, f64)> = rows[lo as usize..=hi as usize]
        .iter()
        .map(|r| (f64::from(r.level), r.mean_sq_delta.log2()))
        .collect();
    let finite = fit.iter().all(|(_, y)| y.is_finite());
    let (xs, ys): (Vec<f64>, Vec<f64>) = fit.into_iter().filter(|(_, y)| y.is_finite()).unzip();
    let beta_hat = linear_fit(&xs, &ys).map_or(f64::NAN, |(_, slope)| -slope);
    Ok(DecayReport {
        rows,
        beta_hat,
        fit_range: (lo, hi),
        reliable: finite && beta_hat.is_finite() && config.samples_per_level >= MIN_RELIABLE_SAMPLES,
    })
}
