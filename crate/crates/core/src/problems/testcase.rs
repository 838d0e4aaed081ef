//! Two-parameter lognormal benchmark with a closed-form expected information gain.
//!
//! `θ₁, θ₂ ~ lognormal(μ, σ₀²)` i.i.d., `Y₁ = exp(g(ξ) log θ₁ + σ_ε ε₁)`,
//! `Y₂ = exp(h(ξ) log θ₂ + σ_ε ε₂)` with `g(ξ) = exp(-ξ²/2)` and
//! `h(ξ) = sqrt(3/2 (1 - exp(-ξ²)))`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{ensure_finite, Dims, PriorDerivs, ProblemModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestCaseParams {
    pub mu: f64,
    pub sigma0: f64,
    pub sigma_eps: f64,
}

impl Default for TestCaseParams {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma0: 1.0,
            sigma_eps: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TestCase {
    params: TestCaseParams,
}

/// Exponents `(g, h)` and their derivatives at a design.
#[derive(Debug, Clone, Copy)]
struct Exponents {
    value: [f64; 2],
    deriv: [f64; 2],
}

fn exponents(xi: f64) -> Exponents {
    let e = (-xi * xi).exp();
    let g = (-0.5 * xi * xi).exp();
    let one_minus = -(-xi * xi).exp_m1();
    let h = (1.5 * one_minus).sqrt();
    let dh = if h > 0.0 {
        3.0 * xi * e / (2.0 * h)
    } else {
        1.5f64.sqrt()
    };
    Exponents {
        value: [g, h],
        deriv: [-xi * g, dh],
    }
}

/// Precomputed outer sample: observation, its log, and the design
/// derivative of the log.
#[derive(Debug, Clone)]
pub struct TestCaseOuter {
    y: [f64; 2],
    log_y: [f64; 2],
    dlog_y: [f64; 2],
    exps: Exponents,
}

impl TestCase {
    pub fn new(params: TestCaseParams) -> Result<Self> {
        if !(params.sigma0 > 0.0 && params.sigma_eps > 0.0) {
            return Err(Error::config("test case scales must be positive"));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &TestCaseParams {
        &self.params
    }

    fn snr(&self) -> f64 {
        (self.params.sigma0 / self.params.sigma_eps).powi(2)
    }

    /// Closed-form expected information gain `U(ξ)`.
    pub fn eig_closed(&self, xi: f64) -> f64 {
        let [g, h] = exponents(xi).value;
        let k = self.snr();
        0.5 * ((g * g * k + 1.0) * (h * h * k + 1.0)).ln()
    }

    /// Jensen upper bound `Ũ(ξ) ≥ U(ξ)`.
    pub fn eig_upper(&self, xi: f64) -> f64 {
        let [g, h] = exponents(xi).value;
        (g * g + h * h) * self.snr()
    }

    /// The maximizer of `U` for the default parameters.
    pub fn optimal_design() -> f64 {
        3f64.ln().sqrt()
    }

    fn log_theta(theta: &[f64]) -> Result<[f64; 2]> {
        if theta.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::Domain {
                what: "lognormal latent",
                value: theta.to_vec(),
            });
        }
        Ok([theta[0].ln(), theta[1].ln()])
    }
}

impl ProblemModel for TestCase {
    type Outer = TestCaseOuter;

    fn dims(&self) -> Dims {
        Dims {
            design: 1,
            latent: 2,
            noise: 2,
            obs: 2,
        }
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R, theta: &mut [f64]) {
        for t in theta.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *t = (self.params.mu + self.params.sigma0 * z).exp();
        }
    }

    fn prior_logpdf(&self, theta: &[f64]) -> Result<f64> {
        check_len("theta", 2, theta.len())?;
        let lt = Self::log_theta(theta)?;
        let s2 = self.params.sigma0.powi(2);
        Ok(lt
            .iter()
            .map(|l| -l - 0.5 * (2.0 * PI * s2).ln() - (l - self.params.mu).powi(2) / (2.0 * s2))
            .sum())
    }

    fn prior_logpdf_derivs(&self, theta: &[f64]) -> Result<PriorDerivs> {
        let logpdf = self.prior_logpdf(theta)?;
        let s2 = self.params.sigma0.powi(2);
        let mut grad = vec![0.0; 2];
        let mut hess = DMatrix::zeros(2, 2);
        for i in 0..2 {
            let (t, l) = (theta[i], theta[i].ln());
            let k = 1.0 + (l - self.params.mu) / s2;
            grad[i] = -k / t;
            hess[(i, i)] = (k - 1.0 / s2) / (t * t);
        }
        Ok(PriorDerivs { logpdf, grad, hess })
    }

    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R, eps: &mut [f64]) {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
    }

    fn simulate(&self, design: &[f64], theta: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
        Ok(self.prepare_outer(design, theta, eps)?.y.to_vec())
    }

    fn prepare_outer(&self, design: &[f64], theta: &[f64], eps: &[f64]) -> Result<TestCaseOuter> {
        self.check_dims(design, theta, eps)?;
        let lt = Self::log_theta(theta)?;
        let exps = exponents(design[0]);
        let mut y = [0.0; 2];
        let mut log_y = [0.0; 2];
        let mut dlog_y = [0.0; 2];
        for i in 0..2 {
            log_y[i] = exps.value[i] * lt[i] + self.params.sigma_eps * eps[i];
            dlog_y[i] = exps.deriv[i] * lt[i];
            y[i] = ensure_finite("lognormal observation", log_y[i].exp(), &[design, theta, eps])?;
        }
        Ok(TestCaseOuter {
            y,
            log_y,
            dlog_y,
            exps,
        })
    }

    fn observation<'a>(&self, outer: &'a TestCaseOuter) -> &'a [f64] {
        &outer.y
    }

    fn loglik_score_at(
        &self,
        design: &[f64],
        outer: &TestCaseOuter,
        theta_inner: &[f64],
        score: &mut [f64],
    ) -> Result<f64> {
        check_len("theta_inner", 2, theta_inner.len())?;
        check_len("score", 1, score.len())?;
        let lt = Self::log_theta(theta_inner)?;
        let s2 = self.params.sigma_eps.powi(2);
        let norm = 0.5 * (2.0 * PI * s2).ln();
        let mut log_rho = 0.0;
        let mut ds = 0.0;
        for i in 0..2 {
            let resid = outer.log_y[i] - outer.exps.value[i] * lt[i];
            let dresid = outer.dlog_y[i] - outer.exps.deriv[i] * lt[i];
            // The -log y term is the lognormal change of variables.
            log_rho += -outer.log_y[i] - norm - resid * resid / (2.0 * s2);
            ds += -outer.dlog_y[i] - resid * dresid / s2;
        }
        score[0] = ds;
        ensure_finite("lognormal log-likelihood", log_rho, &[design, theta_inner])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdcheck;
    use crate::rng::{Phase, StreamKey};

    #[test]
    fn unit_latent_and_zero_noise_give_unit_observation() {
        let m = TestCase::default();
        for xi in [0.3, 1.0, 2.7] {
            assert_eq!(m.simulate(&[xi], &[1.0, 1.0], &[0.0, 0.0]).unwrap(), vec![1.0, 1.0]);
        }
    }

    #[test]
    fn self_score_is_jacobian_term_only() {
        let m = TestCase::default();
        let xi = 1.3;
        let theta = [2.0, 0.4];
        let s = m.loglik_score(&[xi], &theta, &[0.3, -1.1], &theta).unwrap();
        let e = exponents(xi);
        let expected = -e.deriv[0] * theta[0].ln() - e.deriv[1] * theta[1].ln();
        assert!((s.score[0] - expected).abs() < 1e-14);
        let unit = m.loglik_score(&[xi], &[1.0, 1.0], &[0.3, -1.1], &[1.0, 1.0]).unwrap();
        assert_eq!(unit.score[0], 0.0);
    }

    #[test]
    fn prior_logpdf_at_unit_latent() {
        let m = TestCase::default();
        let lp = m.prior_logpdf(&[1.0, 1.0]).unwrap();
        assert!((lp - (-(2.0 * PI).ln())).abs() < 1e-14);
        assert!((lp + 1.83788).abs() < 1e-5);
        assert!(matches!(m.prior_logpdf(&[-1.0, 1.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn prior_integrates_to_one() {
        // Each factor is the same 1-d lognormal; integrate it on a log grid.
        let m = TestCase::default();
        let (lo, hi, n) = (-12.0f64, 12.0f64, 24_000);
        let dz = (hi - lo) / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            let z = lo + (k as f64 + 0.5) * dz;
            let t = z.exp();
            let joint = m.prior_logpdf(&[t, 1.0]).unwrap().exp();
            let other = m.prior_logpdf(&[1.0, 1.0]).unwrap().exp().sqrt();
            total += joint / other * t * dz;
        }
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = TestCase::default();
        let key = StreamKey::new(5, Phase::Test, 0);
        for i in 0..50 {
            let mut rng = key.rng(i);
            let xi = 0.2 + 2.5 * rand::Rng::random::<f64>(&mut rng);
            let mut theta = [0.0; 2];
            let mut inner = [0.0; 2];
            let mut eps = [0.0; 2];
            m.sample_prior(&mut rng, &mut theta);
            m.sample_prior(&mut rng, &mut inner);
            m.sample_noise(&mut rng, &mut eps);
            let s = m.loglik_score(&[xi], &theta, &eps, &inner).unwrap();
            let fd = fdcheck::gradient(
                |x| m.loglik_score(x, &theta, &eps, &inner).unwrap().log_rho,
                &[xi],
                1e-6,
            );
            assert!(fdcheck::rel_err(s.score[0], fd[0], 1.0) < 1e-5, "{} vs {}", s.score[0], fd[0]);

            let p = m.prior_logpdf_derivs(&theta).unwrap();
            let fd_grad = fdcheck::gradient(|t| m.prior_logpdf(t).unwrap(), &theta, 1e-6 * theta[0].min(theta[1]));
            for k in 0..2 {
                assert!(fdcheck::rel_err(p.grad[k], fd_grad[k], 1.0) < 1e-5);
                let h = 1e-6 * theta[k];
                let mut up = theta;
                up[k] += h;
                let mut down = theta;
                down[k] -= h;
                let fd_h = (m.prior_logpdf_derivs(&up).unwrap().grad[k]
                    - m.prior_logpdf_derivs(&down).unwrap().grad[k])
                    / (2.0 * h);
                assert!(fdcheck::rel_err(p.hess[(k, k)], fd_h, 1.0) < 1e-5);
            }
        }
    }

    #[test]
    fn closed_forms() {
        let m = TestCase::default();
        let gain = m.eig_closed(TestCase::optimal_design()) - m.eig_closed(1.5);
        assert!((gain - 0.0148).abs() < 1e-4, "{gain}");
        assert!((m.eig_closed(1.5) - 0.4756).abs() < 1e-4);
        assert!((m.eig_closed(TestCase::optimal_design()) - 0.5 * (8.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((m.eig_closed(40.0) - 0.5 * 2.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = TestCase::default();
        assert!(matches!(
            m.simulate(&[1.0, 2.0], &[1.0, 1.0], &[0.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
    }
}
