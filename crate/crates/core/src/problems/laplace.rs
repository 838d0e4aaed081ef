//! Laplace-approximation importance proposals.
//!
//! For data `y` generated under a known latent `θ*`, the posterior is
//! approximated by `N(θ̂, Σ̂)` with one Newton step from `θ*`:
//!
//! ```text
//! K  = JᵀΣ⁻¹J + Σ_j H_j E_j / Σ_jj − ∇∇log π₀(θ*)
//! θ̂  = θ* − K⁻¹ (JᵀΣ⁻¹E − [∇log π₀(θ*)])
//! Σ̂  = (J(θ̂)ᵀ Σ(θ̂)⁻¹ J(θ̂) − ∇∇log π₀(θ̂))⁻¹
//! ```
//!
//! where `J = −∇ḡ`, `H_j = −∇∇ḡ_j`, `E = y − ḡ(θ*)` and `Σ` is the diagonal
//! noise covariance evaluated at the mean response. The bracketed prior
//! gradient is included for [`LaplaceStep::Posterior`] and dropped for
//! [`LaplaceStep::DataOnly`]. `Σ` uses `θ*` in the `θ̂` equation and `θ̂` in
//! the `Σ̂` equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::proposal::{GaussianProposal, Proposal};
use crate::error::{check_len, Result};
use crate::model::PriorDerivs;

/// Which gradient the Newton step from `θ*` follows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceStep {
    /// Gradient of the full log posterior; exact for linear-Gaussian models.
    #[default]
    Posterior,
    /// Likelihood gradient only (the prior enters through the curvature).
    DataOnly,
}

/// Mean response `ḡ(θ)` with its Jacobian (`t × s`) and per-output Hessians.
#[derive(Debug, Clone)]
pub struct MeanDerivs {
    pub mean: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub hess: Vec<DMatrix<f64>>,
}

/// A model with Gaussian observation noise around a smooth mean response.
pub trait LaplaceTarget {
    fn n_params(&self) -> usize;
    fn mean_derivs(&self, theta: &[f64]) -> Result<MeanDerivs>;
    /// Variance of observation `j` given its mean response.
    fn noise_variance(&self, mean: f64, j: usize) -> f64;
    fn prior_derivs(&self, theta: &[f64]) -> Result<PriorDerivs>;
}

/// Outcome of a Laplace fit. `fallback` is set when a matrix was not
/// positive definite and the prior was substituted as proposal.
#[derive(Debug, Clone)]
pub struct LaplaceFit {
    pub proposal: Proposal,
    pub fallback: bool,
}

impl LaplaceFit {
    fn fallback() -> Self {
        Self {
            proposal: Proposal::Prior,
            fallback: true,
        }
    }

    /// The Gaussian proposal, if the fit succeeded.
    pub fn gaussian(&self) -> Option<&GaussianProposal> {
        match &self.proposal {
            Proposal::Gaussian(g) => Some(g),
            Proposal::Prior => None,
        }
    }
}

pub fn laplace_fit<T: LaplaceTarget>(
    target: &T,
    theta_star: &[f64],
    y: &[f64],
    step: LaplaceStep,
) -> Result<LaplaceFit> {
    let s = target.n_params();
    check_len("theta_star", s, theta_star.len())?;

    let at_star = target.mean_derivs(theta_star)?;
    check_len("observation", at_star.mean.len(), y.len())?;
    let prior_star = target.prior_derivs(theta_star)?;
    let inv_var = inverse_noise(target, &at_star.mean);
    let residual = DVector::from_column_slice(y) - &at_star.mean;

    // J = −∇ḡ; JᵀΣ⁻¹J is sign-invariant, JᵀΣ⁻¹E flips.
    let jac_j = -&at_star.jac;
    let weighted = weight_rows(&jac_j, &inv_var);
    let mut curvature = jac_j.transpose() * &weighted - &prior_star.hess;
    for (j, h) in at_star.hess.iter().enumerate() {
        // H_j = −∇∇ḡ_j
        curvature -= h * (residual[j] * inv_var[j]);
    }
    let mut gradient = weighted.transpose() * &residual;
    if step == LaplaceStep::Posterior {
        gradient -= DVector::from_column_slice(&prior_star.grad);
    }
    let Some(chol) = symmetric(curvature).cholesky() else {
        return Ok(LaplaceFit::fallback());
    };
    let mean = DVector::from_column_slice(theta_star) - chol.solve(&gradient);
    if mean.iter().any(|v| !v.is_finite()) {
        return Ok(LaplaceFit::fallback());
    }

    let at_hat = match target.mean_derivs(mean.as_slice()) {
        Ok(d) => d,
        Err(_) => return Ok(LaplaceFit::fallback()),
    };
    let prior_hat = target.prior_derivs(mean.as_slice())?;
    let inv_var_hat = inverse_noise(target, &at_hat.mean);
    let precision =
        at_hat.jac.transpose() * weight_rows(&at_hat.jac, &inv_var_hat) - &prior_hat.hess;
    let Some(prec_chol) = symmetric(precision).cholesky() else {
        return Ok(LaplaceFit::fallback());
    };
    let cov = symmetric(prec_chol.inverse());
    match GaussianProposal::new(mean, cov) {
        Some(g) => Ok(LaplaceFit {
            proposal: Proposal::Gaussian(g),
            fallback: false,
        }),
        None => Ok(LaplaceFit::fallback()),
    }
}

fn inverse_noise<T: LaplaceTarget>(target: &T, mean: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        mean.len(),
        mean.iter()
            .enumerate()
            .map(|(j, m)| 1.0 / target.noise_variance(*m, j)),
    )
}

/// `diag(w) · A`
fn weight_rows(a: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for (j, mut row) in out.row_iter_mut().enumerate() {
        row *= w[j];
    }
    out
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::pk::Pk;
    use crate::model::ProblemModel;
    use crate::rng::{Phase, StreamKey};

    /// `ḡ(θ) = Aθ + b` with constant noise and a Gaussian prior.
    struct LinearGaussian {
        a: DMatrix<f64>,
        b: DVector<f64>,
        noise: Vec<f64>,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
    }

    impl LaplaceTarget for LinearGaussian {
        fn n_params(&self) -> usize {
            self.a.ncols()
        }
        fn mean_derivs(&self, theta: &[f64]) -> Result<MeanDerivs> {
            let s = self.a.ncols();
            Ok(MeanDerivs {
                mean: &self.a * DVector::from_column_slice(theta) + &self.b,
                jac: self.a.clone(),
                hess: vec![DMatrix::zeros(s, s); self.a.nrows()],
            })
        }
        fn noise_variance(&self, _mean: f64, j: usize) -> f64 {
            self.noise[j]
        }
        fn prior_derivs(&self, theta: &[f64]) -> Result<PriorDerivs> {
            let prec = self.prior_cov.clone().try_inverse().unwrap();
            let d = DVector::from_column_slice(theta) - &self.prior_mean;
            Ok(PriorDerivs {
                logpdf: -0.5 * d.dot(&(&prec * &d)),
                grad: (-(&prec * &d)).as_slice().to_vec(),
                hess: -prec,
            })
        }
    }

    fn surrogate() -> LinearGaussian {
        LinearGaussian {
            a: DMatrix::from_row_slice(
                5,
                3,
                &[
                    1.0, 0.2, -0.3, 0.5, -1.1, 0.0, 2.0, 0.3, 0.7, -0.4, 0.9, 1.2, 0.1, 0.1, -2.0,
                ],
            ),
            b: DVector::from_column_slice(&[0.3, -0.2, 1.0, 0.0, 0.5]),
            noise: vec![0.1, 0.4, 0.2, 1.0, 0.3],
            prior_mean: DVector::from_column_slice(&[0.1, -0.5, 0.8]),
            prior_cov: DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.3, -0.05, 0.0, -0.05, 0.8]),
        }
    }

    #[test]
    fn zero_residual_keeps_theta_star() {
        let pk = Pk::default();
        let design: Vec<f64> = (1..=15).map(f64::from).collect();
        let theta = [0.2, -2.0, 3.1];
        let y = pk.simulate(&design, &theta, &[0.0; 30]).unwrap();
        let fit = pk.laplace_fit(&design, &theta, &y, LaplaceStep::DataOnly).unwrap();
        assert!(!fit.fallback);
        let g = fit.gaussian().unwrap();
        for k in 0..3 {
            assert!((g.mean()[k] - theta[k]).abs() < 1e-14);
        }
        // At the prior mode the posterior step has no prior pull either.
        let mode = pk.params().prior_mean;
        let y = pk.simulate(&design, &mode, &[0.0; 30]).unwrap();
        let fit = pk.laplace_fit(&design, &mode, &y, LaplaceStep::Posterior).unwrap();
        for k in 0..3 {
            assert!((fit.gaussian().unwrap().mean()[k] - mode[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_gaussian_is_exact() {
        let lg = surrogate();
        let theta_star = [0.7, 0.2, -0.4];
        let y = [1.1, -0.8, 2.5, 0.3, -1.7];
        let fit = laplace_fit(&lg, &theta_star, &y, LaplaceStep::Posterior).unwrap();
        let g = fit.gaussian().unwrap();

        let sinv = DMatrix::from_diagonal(&DVector::from_iterator(5, lg.noise.iter().map(|v| 1.0 / v)));
        let p0 = lg.prior_cov.clone().try_inverse().unwrap();
        let post_cov = (lg.a.transpose() * &sinv * &lg.a + &p0).try_inverse().unwrap();
        let post_mean = &post_cov
            * (lg.a.transpose() * &sinv * (DVector::from_column_slice(&y) - &lg.b) + &p0 * &lg.prior_mean);
        assert!((g.mean() - &post_mean).amax() < 1e-10);
        assert!((g.cov() - &post_cov).amax() < 1e-10);
    }

    #[test]
    fn posterior_is_tighter_than_prior() {
        let pk = Pk::default();
        let key = StreamKey::new(3, Phase::Test, 0);
        let prior_cov = DMatrix::from_diagonal_element(3, 3, 0.05);
        for i in 0..20 {
            let mut rng = key.rng(i);
            let design: Vec<f64> = (0..15).map(|_| 24.0 * rand::Rng::random::<f64>(&mut rng)).collect();
            let mut theta = [0.0; 3];
            let mut eps = [0.0; 30];
            pk.sample_prior(&mut rng, &mut theta);
            pk.sample_noise(&mut rng, &mut eps);
            let y = pk.simulate(&design, &theta, &eps).unwrap();
            let fit = pk.laplace_fit(&design, &theta, &y, LaplaceStep::default()).unwrap();
            let g = fit.gaussian().expect("fit should succeed");
            let gap = &prior_cov - g.cov();
            let eig = gap.symmetric_eigen().eigenvalues;
            assert!(eig.min() > -1e-12, "{eig}");
        }
    }

    #[test]
    fn invariant_under_observation_reordering() {
        let pk = Pk::default();
        let key = StreamKey::new(4, Phase::Test, 0);
        let mut rng = key.rng(0);
        let design: Vec<f64> = (1..=15).map(|t| f64::from(t) * 1.4).collect();
        let mut theta = [0.0; 3];
        let mut eps = [0.0; 30];
        pk.sample_prior(&mut rng, &mut theta);
        pk.sample_noise(&mut rng, &mut eps);
        let y = pk.simulate(&design, &theta, &eps).unwrap();
        let perm: Vec<usize> = (0..15).map(|j| (j * 7) % 15).collect();
        let design_p: Vec<f64> = perm.iter().map(|&j| design[j]).collect();
        let y_p: Vec<f64> = perm.iter().map(|&j| y[j]).collect();
        let a = pk.laplace_fit(&design, &theta, &y, LaplaceStep::default()).unwrap();
        let b = pk.laplace_fit(&design_p, &theta, &y_p, LaplaceStep::default()).unwrap();
        let (a, b) = (a.gaussian().unwrap(), b.gaussian().unwrap());
        assert!((a.mean() - b.mean()).amax() < 1e-12);
        assert!((a.cov() - b.cov()).amax() < 1e-12);
    }

    #[test]
    fn indefinite_curvature_falls_back_to_prior() {
        // A flat prior with no data curvature cannot be inverted.
        struct Flat;
        impl LaplaceTarget for Flat {
            fn n_params(&self) -> usize {
                2
            }
            fn mean_derivs(&self, _theta: &[f64]) -> Result<MeanDerivs> {
                Ok(MeanDerivs {
                    mean: DVector::zeros(1),
                    jac: DMatrix::zeros(1, 2),
                    hess: vec![DMatrix::zeros(2, 2)],
                })
            }
            fn noise_variance(&self, _mean: f64, _j: usize) -> f64 {
                1.0
            }
            fn prior_derivs(&self, _theta: &[f64]) -> Result<PriorDerivs> {
                Ok(PriorDerivs {
                    logpdf: 0.0,
                    grad: vec![0.0; 2],
                    hess: DMatrix::zeros(2, 2),
                })
            }
        }
        let fit = laplace_fit(&Flat, &[0.0, 0.0], &[0.3], LaplaceStep::default()).unwrap();
        assert!(fit.fallback);
        assert!(matches!(fit.proposal, Proposal::Prior));
    }
}
