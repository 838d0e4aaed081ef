//! Per-outer-sample random variables: the nested estimator `ψ_{ξ,M,q}`, the
//! MLMC corrections `Δψ_ℓ`, and their log-space EIG counterparts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::inner::{InnerBatch, InnerRatio, WeightedSums};
use crate::error::{check_len, Result};
use crate::model::ProblemModel;
use crate::problems::{fit_proposal, LaplaceStep, Proposal, ProposalKind};

/// How the coarse term of a level-ℓ correction is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    /// Mean of the two half-batch estimators.
    #[default]
    Antithetic,
    /// First half-batch only.
    Naive,
}

/// One realization of `Δψ_{ξ,ℓ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionSample {
    pub delta: Vec<f64>,
    pub level: u32,
    /// Inner likelihood evaluations, `M₀ 2^ℓ`.
    pub cost: u64,
    /// `ψ_{ξ,M₀2^ℓ,q}` from the same draw.
    pub fine_psi: Vec<f64>,
    pub laplace_fallback: bool,
}

/// Outer draw `(θ, ε)` with its observation and fitted proposal.
pub struct OuterDraw<M: ProblemModel> {
    pub theta: Vec<f64>,
    pub eps: Vec<f64>,
    pub outer: M::Outer,
    pub proposal: Proposal,
    pub laplace_fallback: bool,
}

/// Draws outer and inner samples for one model at one design.
pub struct Sampler<'a, M: ProblemModel> {
    model: &'a M,
    design: &'a [f64],
    proposal: ProposalKind,
    laplace_step: LaplaceStep,
}

impl<'a, M: ProblemModel> Sampler<'a, M> {
    pub fn new(model: &'a M, design: &'a [f64], proposal: ProposalKind) -> Result<Self> {
        check_len("design", model.dims().design, design.len())?;
        Ok(Self {
            model,
            design,
            proposal,
            laplace_step: LaplaceStep::default(),
        })
    }

    pub fn with_laplace_step(mut self, step: LaplaceStep) -> Self {
        self.laplace_step = step;
        self
    }

    pub fn model(&self) -> &M {
        self.model
    }

    pub fn design(&self) -> &[f64] {
        self.design
    }

    pub fn draw_outer<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<OuterDraw<M>> {
        let dims = self.model.dims();
        let mut theta = vec![0.0; dims.latent];
        let mut eps = vec![0.0; dims.noise];
        self.model.sample_prior(rng, &mut theta);
        self.model.sample_noise(rng, &mut eps);
        let outer = self.model.prepare_outer(self.design, &theta, &eps)?;
        let (proposal, laplace_fallback) = fit_proposal(
            self.model,
            self.proposal,
            self.laplace_step,
            self.design,
            &theta,
            &outer,
        )?;
        Ok(OuterDraw {
            theta,
            eps,
            outer,
            proposal,
            laplace_fallback,
        })
    }

    /// Score and log-likelihood at `θ' = θ`.
    pub fn self_term(&self, draw: &OuterDraw<M>) -> Result<(f64, Vec<f64>)> {
        let mut score = vec![0.0; self.model.dims().design];
        let log_rho = self
            .model
            .loglik_score_at(self.design, &draw.outer, &draw.theta, &mut score)?;
        Ok((log_rho, score))
    }

    /// `m` fresh proposal draws, each likelihood evaluated exactly once.
    pub fn inner_batch<R: Rng + ?Sized>(
        &self,
        draw: &OuterDraw<M>,
        m: usize,
        rng: &mut R,
    ) -> Result<InnerBatch> {
        let dims = self.model.dims();
        let mut batch = InnerBatch::with_capacity(dims.design, m);
        let mut theta_inner = vec![0.0; dims.latent];
        for _ in 0..m {
            let correction = draw.proposal.sample_inner(self.model, rng, &mut theta_inner)?;
            let row = batch.push_row();
            let log_rho = self
                .model
                .loglik_score_at(self.design, &draw.outer, &theta_inner, row)?;
            batch.push_log_weight(log_rho + correction);
        }
        Ok(batch)
    }

    /// Standard nested estimator `ψ_{ξ,M,q}` for a fresh outer draw.
    pub fn psi_standard<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<(Vec<f64>, bool)> {
        let draw = self.draw_outer(rng)?;
        let (_, self_score) = self.self_term(&draw)?;
        let batch = self.inner_batch(&draw, m, rng)?;
        let ratio = super::inner::inner_ratio(&batch)?;
        Ok((sub(&self_score, &ratio.ratio), draw.laplace_fallback))
    }

    pub fn delta_psi_antithetic<R: Rng + ?Sized>(
        &self,
        level: u32,
        m0: u64,
        rng: &mut R,
    ) -> Result<CorrectionSample> {
        self.delta_psi(level, m0, Construction::Antithetic, rng)
    }

    pub fn delta_psi_naive<R: Rng + ?Sized>(
        &self,
        level: u32,
        m0: u64,
        rng: &mut R,
    ) -> Result<CorrectionSample> {
        self.delta_psi(level, m0, Construction::Naive, rng)
    }

    pub fn delta_psi<R: Rng + ?Sized>(
        &self,
        level: u32,
        m0: u64,
        construction: Construction,
        rng: &mut R,
    ) -> Result<CorrectionSample> {
        let draw = self.draw_outer(rng)?;
        let (_, self_score) = self.self_term(&draw)?;
        let cost = m0 << level;
        let batch = self.inner_batch(&draw, cost as usize, rng)?;
        let parts = correction_parts(&batch, level)?;
        let mut delta = parts.delta(construction);
        if parts.coarse.is_none() {
            for (d, s) in delta.iter_mut().zip(&self_score) {
                *d += s;
            }
        }
        Ok(CorrectionSample {
            delta,
            level,
            cost,
            fine_psi: sub(&self_score, &parts.fine.ratio),
            laplace_fallback: draw.laplace_fallback,
        })
    }

    /// `log ρ_self − log ϱ_{M,q}` for a fresh outer draw.
    pub fn eig_nested_term<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<(f64, bool)> {
        let draw = self.draw_outer(rng)?;
        let (log_self, _) = self.self_term(&draw)?;
        let batch = self.inner_batch(&draw, m, rng)?;
        let ratio = super::inner::inner_ratio(&batch)?;
        Ok((log_self - ratio.log_rho_bar, draw.laplace_fallback))
    }

    /// Level-ℓ correction of the EIG: `φ₀ = log ρ_self − log ϱ_{M₀}` and
    /// `Δφ_ℓ = (log ϱ_a + log ϱ_b)/2 − log ϱ_fine` for `ℓ > 0`.
    pub fn eig_correction<R: Rng + ?Sized>(
        &self,
        level: u32,
        m0: u64,
        rng: &mut R,
    ) -> Result<(f64, bool)> {
        let draw = self.draw_outer(rng)?;
        let batch = self.inner_batch(&draw, (m0 << level) as usize, rng)?;
        let value = if level == 0 {
            let (log_self, _) = self.self_term(&draw)?;
            log_self - super::inner::inner_ratio(&batch)?.log_rho_bar
        } else {
            eig_correction_from_batch(&batch)?
        };
        Ok((value, draw.laplace_fallback))
    }
}

/// Fine and coarse inner ratios of one correction.
pub struct CorrectionParts {
    pub fine: InnerRatio,
    pub coarse: Option<(InnerRatio, InnerRatio)>,
}

impl CorrectionParts {
    /// `Δψ_ℓ` from the ratios alone; the self-score cancels for `ℓ > 0`.
    /// At level 0 there is no coarse term and this returns `−ratio`, so
    /// callers add the self score.
    fn delta(&self, construction: Construction) -> Vec<f64> {
        match &self.coarse {
            None => self.fine.ratio.iter().map(|r| -r).collect(),
            Some((a, b)) => match construction {
                Construction::Antithetic => a
                    .ratio
                    .iter()
                    .zip(&b.ratio)
                    .zip(&self.fine.ratio)
                    .map(|((x, y), f)| 0.5 * (x + y) - f)
                    .collect(),
                Construction::Naive => sub(&a.ratio, &self.fine.ratio),
            },
        }
    }
}

/// Splits a level-ℓ batch (`ℓ > 0`) into halves and builds the fine sums by
/// merging the half sums, so identical halves give bit-identical ratios.
pub fn correction_parts(batch: &InnerBatch, level: u32) -> Result<CorrectionParts> {
    let m = batch.len();
    if level == 0 || m < 2 {
        return Ok(CorrectionParts {
            fine: super::inner::inner_ratio(batch)?,
            coarse: None,
        });
    }
    let half = m / 2;
    let a = WeightedSums::over(batch, 0..half)?;
    let b = WeightedSums::over(batch, half..m)?;
    let fine = a.merge(&b);
    if cfg!(debug_assertions) {
        let (rho, grad) = super::inner::antithetic_identity_residual(batch)?;
        let tol = 1e-12f64.max(4.0 * m as f64 * f64::EPSILON);
        debug_assert!(rho <= tol && grad <= tol, "antithetic identity: {rho:e}, {grad:e}");
    }
    Ok(CorrectionParts {
        fine: fine.to_ratio(),
        coarse: Some((a.to_ratio(), b.to_ratio())),
    })
}

/// `Δψ_ℓ` for an already drawn batch; exposed so tests can inject batches.
pub fn correction_from_batch(
    self_score: &[f64],
    batch: &InnerBatch,
    level: u32,
    construction: Construction,
) -> Result<Vec<f64>> {
    let parts = correction_parts(batch, level)?;
    let delta = parts.delta(construction);
    Ok(if parts.coarse.is_none() {
        self_score.iter().zip(&delta).map(|(s, d)| s + d).collect()
    } else {
        delta
    })
}

/// `Δφ_ℓ` for `ℓ > 0` from an already drawn batch.
pub fn eig_correction_from_batch(batch: &InnerBatch) -> Result<f64> {
    let parts = correction_parts(batch, 1)?;
    let (a, b) = parts.coarse.expect("batch of at least two samples");
    Ok(0.5 * (a.log_rho_bar + b.log_rho_bar) - parts.fine.log_rho_bar)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlmc::inner::inner_ratio;
    use crate::problems::{Pk, TestCase};
    use crate::rng::{Phase, StreamKey};

    fn doubled(batch: &InnerBatch) -> InnerBatch {
        let mut lw = batch.log_weights().to_vec();
        lw.extend_from_slice(batch.log_weights());
        let mut sc: Vec<f64> = (0..batch.len()).flat_map(|m| batch.score(m).to_vec()).collect();
        sc.extend(sc.clone());
        InnerBatch::from_parts(batch.dim(), lw, sc).unwrap()
    }

    #[test]
    fn identical_halves_give_zero_corrections() {
        let pk = Pk::default();
        let design: Vec<f64> = (1..=15).map(f64::from).collect();
        let sampler = Sampler::new(&pk, &design, ProposalKind::Laplace).unwrap();
        let mut rng = StreamKey::new(1, Phase::Test, 0).rng(0);
        for level in 1..6 {
            let draw = sampler.draw_outer(&mut rng).unwrap();
            let half = sampler.inner_batch(&draw, 1 << (level - 1), &mut rng).unwrap();
            let batch = doubled(&half);
            let (_, self_score) = sampler.self_term(&draw).unwrap();
            for c in [Construction::Antithetic, Construction::Naive] {
                let d = correction_from_batch(&self_score, &batch, level, c).unwrap();
                assert!(d.iter().all(|v| *v == 0.0), "{c:?} level {level}: {d:?}");
            }
            assert_eq!(eig_correction_from_batch(&batch).unwrap(), 0.0);
        }
    }

    #[test]
    fn self_score_cancels_above_level_zero() {
        let tc = TestCase::default();
        let sampler = Sampler::new(&tc, &[1.5], ProposalKind::Prior).unwrap();
        let key = StreamKey::new(2, Phase::Test, 0);
        for i in 0..200 {
            let mut rng = key.rng(i);
            let level = 1 + (i % 6) as u32;
            let draw = sampler.draw_outer(&mut rng).unwrap();
            let (_, self_score) = sampler.self_term(&draw).unwrap();
            let batch = sampler.inner_batch(&draw, 1 << level, &mut rng).unwrap();
            let without = correction_from_batch(&self_score, &batch, level, Construction::Antithetic).unwrap();

            // Literal ψ_fine − (ψ_a + ψ_b)/2 with the self score kept in.
            let m = batch.len();
            let sub = |r: std::ops::Range<usize>| {
                let lw = batch.log_weights()[r.clone()].to_vec();
                let sc = r.flat_map(|k| batch.score(k).to_vec()).collect();
                inner_ratio(&InnerBatch::from_parts(1, lw, sc).unwrap()).unwrap().ratio[0]
            };
            let psi = |r: f64| self_score[0] - r;
            let with = psi(sub(0..m)) - 0.5 * (psi(sub(0..m / 2)) + psi(sub(m / 2..m)));
            let scale = self_score[0].abs().max(1.0);
            assert!((without[0] - with).abs() < 1e-12 * scale, "{} vs {with}", without[0]);
        }
    }

    #[test]
    fn level_zero_agrees_across_constructions() {
        let tc = TestCase::default();
        let sampler = Sampler::new(&tc, &[1.2], ProposalKind::Prior).unwrap();
        let key = StreamKey::new(3, Phase::Test, 0);
        for i in 0..100 {
            let a = sampler.delta_psi_antithetic(0, 2, &mut key.rng(i)).unwrap();
            let n = sampler.delta_psi_naive(0, 2, &mut key.rng(i)).unwrap();
            assert_eq!(a.delta, n.delta);
            assert_eq!(a.delta, a.fine_psi);
            let (psi, _) = sampler.psi_standard(2, &mut key.rng(i)).unwrap();
            assert_eq!(a.delta, psi);
        }
    }

    #[test]
    fn cost_is_m0_times_two_to_the_level() {
        let tc = TestCase::default();
        let sampler = Sampler::new(&tc, &[1.2], ProposalKind::Prior).unwrap();
        let mut rng = StreamKey::new(4, Phase::Test, 0).rng(0);
        for (level, m0) in [(0, 1), (3, 1), (2, 3)] {
            let c = sampler.delta_psi_antithetic(level, m0, &mut rng).unwrap();
            assert_eq!(c.cost, m0 << level);
            assert_eq!(c.level, level);
        }
    }

    /// Likelihood independent of the latent: the data carry no information.
    struct Uninformative;

    impl ProblemModel for Uninformative {
        type Outer = Vec<f64>;

        fn dims(&self) -> crate::model::Dims {
            crate::model::Dims { design: 2, latent: 1, noise: 1, obs: 1 }
        }

        fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R, theta: &mut [f64]) {
            theta[0] = rng.random::<f64>();
        }

        fn prior_logpdf(&self, _theta: &[f64]) -> Result<f64> {
            Ok(0.0)
        }

        fn prior_logpdf_derivs(&self, _theta: &[f64]) -> Result<crate::model::PriorDerivs> {
            unimplemented!()
        }

        fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R, eps: &mut [f64]) {
            eps[0] = rng.random::<f64>() - 0.5;
        }

        fn simulate(&self, design: &[f64], _theta: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![design[0] * design[1] + eps[0]])
        }

        fn prepare_outer(&self, design: &[f64], theta: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
            self.simulate(design, theta, eps)
        }

        fn observation<'a>(&self, outer: &'a Vec<f64>) -> &'a [f64] {
            outer
        }

        fn loglik_score_at(
            &self,
            design: &[f64],
            outer: &Vec<f64>,
            _theta_inner: &[f64],
            score: &mut [f64],
        ) -> Result<f64> {
            let r = outer[0] - design[0] * design[1];
            score[0] = -r * design[1];
            score[1] = -r * design[0];
            Ok(-0.5 * r * r)
        }
    }

    #[test]
    fn uninformative_model_gives_zero_psi() {
        let sampler = Sampler::new(&Uninformative, &[0.7, -0.2], ProposalKind::Prior).unwrap();
        let key = StreamKey::new(5, Phase::Test, 0);
        for mm in [1usize, 2, 16, 64] {
            let (psi, _) = sampler.psi_standard(mm, &mut key.rng(mm as u64)).unwrap();
            assert!(psi.iter().all(|v| v.abs() < 1e-12), "{psi:?}");
        }
    }
}
