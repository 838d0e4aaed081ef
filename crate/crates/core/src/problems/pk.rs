//! One-compartment pharmacokinetic model with first-order absorption and
//! mixed multiplicative/additive measurement noise.
//!
//! Latents are log-parameters `θ = (log k_a, log k_e, log V)`; the design is
//! the vector of blood-sampling times. The mean concentration at time `T` is
//! `D k_a / (V (k_a - k_e)) (e^{-k_e T} - e^{-k_a T})`, evaluated through
//! `φ(x) = (1 - e^{-x}) / x` so the removable singularity at `k_a = k_e`
//! needs no special branch.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::laplace::{laplace_fit, LaplaceFit, LaplaceStep, LaplaceTarget, MeanDerivs};
use crate::error::{check_len, Error, Result};
use crate::model::{ensure_finite, Dims, PriorDerivs, ProblemModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PkParams {
    pub dose: f64,
    pub prior_mean: [f64; 3],
    pub prior_var: f64,
    /// Variance of the multiplicative noise.
    pub sigma1_sq: f64,
    /// Variance of the additive noise.
    pub sigma2_sq: f64,
    pub n_times: usize,
}

impl Default for PkParams {
    fn default() -> Self {
        Self {
            dose: 400.0,
            prior_mean: [0.0, 0.1f64.ln(), 20.0f64.ln()],
            prior_var: 0.05,
            sigma1_sq: 0.01,
            sigma2_sq: 0.1,
            n_times: 15,
        }
    }
}

/// Mean response with the derivatives needed by the score and the Laplace fit.
/// `grad_theta` and `hess_theta` are with respect to the log-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanResponse {
    pub value: f64,
    pub d_t: f64,
    pub grad_theta: [f64; 3],
    pub hess_theta: [[f64; 3]; 3],
}

/// `φ(x) = (1 - e^{-x})/x` and its first two derivatives.
fn phi_derivs(x: f64) -> [f64; 3] {
    if x.abs() < 0.5 {
        // φ⁽ⁿ⁾(x) = Σ_k (-1)^k k!/(k-n)! x^{k-n} / (k+1)!
        let (mut p0, mut p1, mut p2) = (0.0, 0.0, 0.0);
        let mut fact = 1.0; // (k+1)!
        for k in 0..28u32 {
            fact *= f64::from(k + 1);
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let kf = f64::from(k);
            p0 += sign * x.powi(k as i32) / fact;
            if k >= 1 {
                p1 += sign * kf * x.powi(k as i32 - 1) / fact;
            }
            if k >= 2 {
                p2 += sign * kf * (kf - 1.0) * x.powi(k as i32 - 2) / fact;
            }
        }
        [p0, p1, p2]
    } else {
        let em = (-x).exp();
        [
            -(-x).exp_m1() / x,
            -(1.0 - em * (1.0 + x)) / (x * x),
            (2.0 - em * (x * x + 2.0 * x + 2.0)) / (x * x * x),
        ]
    }
}

/// Mean concentration and its time derivative only (the inner-loop path).
fn mean_value_dt(dose: f64, theta: &[f64], t: f64) -> (f64, f64) {
    let (ka, ke, c) = (theta[0].exp(), theta[1].exp(), dose * (-theta[2]).exp());
    let delta = ka - ke;
    let decay = (-ke * t).exp();
    let [p0, p1, _] = phi_derivs(delta * t);
    let p = ka * t * decay;
    let p_t = ka * decay * (1.0 - ke * t);
    (c * p * p0, c * (p_t * p0 + p * delta * p1))
}

/// Mean concentration at time `t` with all derivatives.
pub fn pk_mean_response(dose: f64, theta: &[f64], t: f64) -> MeanResponse {
    let (a, e, c) = (theta[0].exp(), theta[1].exp(), dose * (-theta[2]).exp());
    let delta = a - e;
    let decay = (-e * t).exp();
    let [f0, f1, f2] = phi_derivs(delta * t);

    // F = P·Φ with P = a t e^{-e t} and Φ = φ((a - e) t).
    let p = a * t * decay;
    let (p_a, p_e) = (t * decay, -a * t * t * decay);
    let (p_ae, p_ee) = (-t * t * decay, a * t * t * t * decay);
    let (q_a, q_e) = (t * f1, -t * f1);
    let (q_aa, q_ae, q_ee) = (t * t * f2, -t * t * f2, t * t * f2);

    let f = p * f0;
    let f_a = p_a * f0 + p * q_a;
    let f_e = p_e * f0 + p * q_e;
    let f_aa = 2.0 * p_a * q_a + p * q_aa;
    let f_ae = p_ae * f0 + p_a * q_e + p_e * q_a + p * q_ae;
    let f_ee = p_ee * f0 + 2.0 * p_e * q_e + p * q_ee;
    let f_t = a * decay * (1.0 - e * t) * f0 + p * delta * f1;

    let value = c * f;
    let g_a = c * a * f_a;
    let g_e = c * e * f_e;
    let h_aa = c * (a * f_a + a * a * f_aa);
    let h_ae = c * a * e * f_ae;
    let h_ee = c * (e * f_e + e * e * f_ee);
    MeanResponse {
        value,
        d_t: c * f_t,
        grad_theta: [g_a, g_e, -value],
        hess_theta: [
            [h_aa, h_ae, -g_a],
            [h_ae, h_ee, -g_e],
            [-g_a, -g_e, value],
        ],
    }
}

#[derive(Debug, Clone, Default)]
pub struct Pk {
    params: PkParams,
}

/// Observations and their time derivatives for one outer sample.
#[derive(Debug, Clone)]
pub struct PkOuter {
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl Pk {
    pub fn new(params: PkParams) -> Result<Self> {
        if !(params.dose > 0.0
            && params.prior_var > 0.0
            && params.sigma1_sq > 0.0
            && params.sigma2_sq > 0.0
            && params.n_times > 0)
        {
            return Err(Error::config(
                "PK dose, variances and number of sampling times must be positive",
            ));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &PkParams {
        &self.params
    }

    /// Differential entropy of the Gaussian prior.
    pub fn prior_entropy(&self) -> f64 {
        3.0 * (2.0 * PI * E * self.params.prior_var).sqrt().ln()
    }

    pub fn mean_response(&self, theta: &[f64], t: f64) -> MeanResponse {
        pk_mean_response(self.params.dose, theta, t)
    }

    /// Variance of one observation given its mean response.
    pub fn noise_variance(&self, mean: f64) -> f64 {
        mean * mean * self.params.sigma1_sq + self.params.sigma2_sq
    }

    /// Laplace-approximation proposal for the posterior after observing `y`
    /// under the known latent `theta_star`.
    pub fn laplace_fit(
        &self,
        design: &[f64],
        theta_star: &[f64],
        y: &[f64],
        step: LaplaceStep,
    ) -> Result<LaplaceFit> {
        check_len("design", self.params.n_times, design.len())?;
        check_len("observation", self.params.n_times, y.len())?;
        laplace_fit(&PkLaplace { pk: self, design }, theta_star, y, step)
    }

    fn check_times(design: &[f64]) -> Result<()> {
        if design.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::Domain {
                what: "sampling time",
                value: design.to_vec(),
            });
        }
        Ok(())
    }
}

impl ProblemModel for Pk {
    type Outer = PkOuter;

    fn dims(&self) -> Dims {
        let n = self.params.n_times;
        Dims {
            design: n,
            latent: 3,
            noise: 2 * n,
            obs: n,
        }
    }

    fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R, theta: &mut [f64]) {
        let sd = self.params.prior_var.sqrt();
        for (t, mu) in theta.iter_mut().zip(self.params.prior_mean) {
            let z: f64 = rng.sample(StandardNormal);
            *t = mu + sd * z;
        }
    }

    fn prior_logpdf(&self, theta: &[f64]) -> Result<f64> {
        check_len("theta", 3, theta.len())?;
        let v = self.params.prior_var;
        Ok(theta
            .iter()
            .zip(self.params.prior_mean)
            .map(|(t, mu)| -0.5 * (2.0 * PI * v).ln() - (t - mu).powi(2) / (2.0 * v))
            .sum())
    }

    fn prior_logpdf_derivs(&self, theta: &[f64]) -> Result<PriorDerivs> {
        let logpdf = self.prior_logpdf(theta)?;
        let v = self.params.prior_var;
        let grad = theta
            .iter()
            .zip(self.params.prior_mean)
            .map(|(t, mu)| -(t - mu) / v)
            .collect();
        Ok(PriorDerivs {
            logpdf,
            grad,
            hess: DMatrix::from_diagonal_element(3, 3, -1.0 / v),
        })
    }

    /// Noise is laid out as `(ε₁, ε₂)` pairs per sampling time.
    fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R, eps: &mut [f64]) {
        let (s1, s2) = (self.params.sigma1_sq.sqrt(), self.params.sigma2_sq.sqrt());
        for pair in eps.chunks_exact_mut(2) {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            pair[0] = s1 * z1;
            pair[1] = s2 * z2;
        }
    }

    fn simulate(&self, design: &[f64], theta: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
        Ok(self.prepare_outer(design, theta, eps)?.y)
    }

    fn prepare_outer(&self, design: &[f64], theta: &[f64], eps: &[f64]) -> Result<PkOuter> {
        self.check_dims(design, theta, eps)?;
        Self::check_times(design)?;
        let n = self.params.n_times;
        let mut y = Vec::with_capacity(n);
        let mut dy = Vec::with_capacity(n);
        for (t, pair) in design.iter().zip(eps.chunks_exact(2)) {
            let (m, m_t) = mean_value_dt(self.params.dose, theta, *t);
            let obs = m * (1.0 + pair[0]) + pair[1];
            y.push(ensure_finite("PK observation", obs, &[design, theta, eps])?);
            dy.push(m_t * (1.0 + pair[0]));
        }
        Ok(PkOuter { y, dy })
    }

    fn observation<'a>(&self, outer: &'a PkOuter) -> &'a [f64] {
        &outer.y
    }

    fn loglik_score_at(
        &self,
        design: &[f64],
        outer: &PkOuter,
        theta_inner: &[f64],
        score: &mut [f64],
    ) -> Result<f64> {
        check_len("theta_inner", 3, theta_inner.len())?;
        check_len("score", self.params.n_times, score.len())?;
        let (s1, s2) = (self.params.sigma1_sq, self.params.sigma2_sq);
        let mut log_rho = 0.0;
        for j in 0..design.len() {
            let (m, m_t) = mean_value_dt(self.params.dose, theta_inner, design[j]);
            let var = m * m * s1 + s2;
            let r = outer.y[j] - m;
            log_rho += -0.5 * (2.0 * PI * var).ln() - r * r / (2.0 * var);
            let dl_dy = -r / var;
            let dl_dm = (r - m * s1) / var + r * r * m * s1 / (var * var);
            score[j] = dl_dy * outer.dy[j] + dl_dm * m_t;
        }
        ensure_finite("PK log-likelihood", log_rho, &[design, theta_inner])
    }

    fn laplace_proposal(
        &self,
        design: &[f64],
        theta_star: &[f64],
        outer: &PkOuter,
        step: LaplaceStep,
    ) -> Result<LaplaceFit> {
        self.laplace_fit(design, theta_star, &outer.y, step)
    }
}

struct PkLaplace<'a> {
    pk: &'a Pk,
    design: &'a [f64],
}

impl LaplaceTarget for PkLaplace<'_> {
    fn n_params(&self) -> usize {
        3
    }

    fn mean_derivs(&self, theta: &[f64]) -> Result<MeanDerivs> {
        let n = self.design.len();
        let mut mean = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, 3);
        let mut hess = Vec::with_capacity(n);
        for (j, t) in self.design.iter().enumerate() {
            let r = self.pk.mean_response(theta, *t);
            mean[j] = r.value;
            for k in 0..3 {
                jac[(j, k)] = r.grad_theta[k];
            }
            hess.push(DMatrix::from_fn(3, 3, |a, b| r.hess_theta[a][b]));
        }
        if mean.iter().chain(jac.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                context: "PK mean response",
                inputs: theta.to_vec(),
            });
        }
        Ok(MeanDerivs { mean, jac, hess })
    }

    fn noise_variance(&self, mean: f64, _j: usize) -> f64 {
        self.pk.noise_variance(mean)
    }

    fn prior_derivs(&self, theta: &[f64]) -> Result<PriorDerivs> {
        self.pk.prior_logpdf_derivs(theta)
    }
}
