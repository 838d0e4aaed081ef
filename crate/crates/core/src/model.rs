//! The experimental-design problem interface consumed by every estimator.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::optim::BoxDomain;
use crate::problems::laplace::{LaplaceFit, LaplaceStep};

/// Sizes of the design `d`, latent `s`, noise `s'` and observation `t` spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub design: usize,
    pub latent: usize,
    pub noise: usize,
    pub obs: usize,
}

/// Design vector together with its feasible box.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    values: Vec<f64>,
    domain: BoxDomain,
}

impl Design {
    pub fn new(values: Vec<f64>, domain: BoxDomain) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("design must have at least one coordinate"));
        }
        check_len("design bounds", values.len(), domain.dim())?;
        if !domain.contains(&values) {
            return Err(Error::Domain {
                what: "design",
                value: values,
            });
        }
        Ok(Self { values, domain })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// `log ρ(f_ξ(θ, ε) | θ', ξ)` and its total gradient in the design.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLogLikelihood {
    pub log_rho: f64,
    pub score: Vec<f64>,
}

/// Prior log-density with its gradient and Hessian in the latent variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorDerivs {
    pub logpdf: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

/// A Bayesian design problem with an explicit, strictly positive likelihood.
///
/// Implementations are pure: all randomness arrives through the `rng`
/// argument and nothing is mutated behind `&self`.
pub trait ProblemModel: Send + Sync {
    /// Per-outer-sample quantities shared by every inner evaluation:
    /// the observation and its design derivative.
    type Outer: Send + Sync;

    fn dims(&self) -> Dims;

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R, theta: &mut [f64]);

    fn prior_logpdf(&self, theta: &[f64]) -> Result<f64>;

    fn prior_logpdf_derivs(&self, theta: &[f64]) -> Result<PriorDerivs>;

    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R, eps: &mut [f64]);

    /// Forward model `Y = f_ξ(θ, ε)`.
    fn simulate(&self, design: &[f64], theta: &[f64], eps: &[f64]) -> Result<Vec<f64>>;

    fn prepare_outer(&self, design: &[f64], theta: &[f64], eps: &[f64]) -> Result<Self::Outer>;

    fn observation<'a>(&self, outer: &'a Self::Outer) -> &'a [f64];

    /// Writes the design score into `score` and returns `log ρ`.
    fn loglik_score_at(
        &self,
        design: &[f64],
        outer: &Self::Outer,
        theta_inner: &[f64],
        score: &mut [f64],
    ) -> Result<f64>;

    fn loglik_score(
        &self,
        design: &[f64],
        theta: &[f64],
        eps: &[f64],
        theta_inner: &[f64],
    ) -> Result<ScoredLogLikelihood> {
        let outer = self.prepare_outer(design, theta, eps)?;
        let mut score = vec![0.0; self.dims().design];
        let log_rho = self.loglik_score_at(design, &outer, theta_inner, &mut score)?;
        Ok(ScoredLogLikelihood { log_rho, score })
    }

    /// Gaussian importance proposal fitted to the posterior of one outer sample.
    fn laplace_proposal(
        &self,
        _design: &[f64],
        _theta_star: &[f64],
        _outer: &Self::Outer,
        _step: LaplaceStep,
    ) -> Result<LaplaceFit> {
        Err(Error::config("this problem does not support Laplace proposals"))
    }

    /// Checks the lengths of a `(design, theta, eps)` triple.
    fn check_dims(&self, design: &[f64], theta: &[f64], eps: &[f64]) -> Result<()> {
        let dims = self.dims();
        check_len("design", dims.design, design.len())?;
        check_len("theta", dims.latent, theta.len())?;
        check_len("noise", dims.noise, eps.len())
    }
}

pub(crate) fn ensure_finite(context: &'static str, value: f64, inputs: &[&[f64]]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical {
            context,
            inputs: inputs.iter().flat_map(|s| s.iter().copied()).collect(),
        })
    }
}
