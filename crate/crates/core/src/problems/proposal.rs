//! Importance distributions for the inner samples.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::laplace::LaplaceStep;
use crate::error::{check_len, Result};
use crate::model::ProblemModel;

/// How the proposal is built for each outer sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    #[default]
    Prior,
    Laplace,
}

/// Multivariate normal with cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianProposal {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianProposal {
    /// Returns `None` when `cov` is not symmetric positive definite.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Option<Self> {
        let s = mean.len();
        if cov.nrows() != s || cov.ncols() != s {
            return None;
        }
        let chol = cov.clone().cholesky()?.l();
        let log_det_half: f64 = chol.diagonal().iter().map(|d| d.ln()).sum();
        if !log_det_half.is_finite() {
            return None;
        }
        let log_norm = -0.5 * s as f64 * (2.0 * PI).ln() - log_det_half;
        Some(Self {
            mean,
            cov,
            chol,
            log_norm,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws into `out` and returns `log q(out)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> f64 {
        let s = self.dim();
        let z = DVector::from_iterator(s, (0..s).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &self.mean + &self.chol * &z;
        out.copy_from_slice(x.as_slice());
        self.log_norm - 0.5 * z.norm_squared()
    }

    pub fn logpdf(&self, theta: &[f64]) -> Result<f64> {
        check_len("theta", self.dim(), theta.len())?;
        let d = DVector::from_column_slice(theta) - &self.mean;
        let z = self
            .chol
            .solve_lower_triangular(&d)
            .expect("Cholesky factor has a positive diagonal");
        Ok(self.log_norm - 0.5 * z.norm_squared())
    }
}

#[derive(Debug, Clone)]
pub enum Proposal {
    Prior,
    Gaussian(GaussianProposal),
}

impl Proposal {
    /// Draws an inner latent into `out` and returns the importance log-weight
    /// correction `log π₀(θ') − log q(θ')`, which is exactly zero for the prior.
    pub fn sample_inner<M: ProblemModel, R: Rng + ?Sized>(
        &self,
        model: &M,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<f64> {
        match self {
            Proposal::Prior => {
                model.sample_prior(rng, out);
                Ok(0.0)
            }
            Proposal::Gaussian(g) => {
                let log_q = g.sample(rng, out);
                Ok(model.prior_logpdf(out)? - log_q)
            }
        }
    }

    /// A draw together with its proposal log-density.
    pub fn sample_with_logpdf<M: ProblemModel, R: Rng + ?Sized>(
        &self,
        model: &M,
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64)> {
        let mut theta = vec![0.0; model.dims().latent];
        let log_q = match self {
            Proposal::Prior => {
                model.sample_prior(rng, &mut theta);
                model.prior_logpdf(&theta)?
            }
            Proposal::Gaussian(g) => g.sample(rng, &mut theta),
        };
        Ok((theta, log_q))
    }
}

/// Builds the proposal for one outer sample. The flag reports a Laplace
/// fallback to the prior.
pub fn fit_proposal<M: ProblemModel>(
    model: &M,
    kind: ProposalKind,
    step: LaplaceStep,
    design: &[f64],
    theta: &[f64],
    outer: &M::Outer,
) -> Result<(Proposal, bool)> {
    match kind {
        ProposalKind::Prior => Ok((Proposal::Prior, false)),
        ProposalKind::Laplace => {
            let fit = model.laplace_proposal(design, theta, outer, step)?;
            Ok((fit.proposal, fit.fallback))
        }
    }
}
