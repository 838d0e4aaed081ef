//! Self-normalized importance-weighted inner averages, all in log space.

use std::ops::Range;

use crate::error::{Error, Result};

/// Log importance weights `a_m = log ρ_m + log π₀(θ'_m) − log q(θ'_m)` and
/// the design scores at each inner sample (row-major, `M × d`).
#[derive(Debug, Clone, PartialEq)]
pub struct InnerBatch {
    dim: usize,
    log_weights: Vec<f64>,
    scores: Vec<f64>,
}

impl InnerBatch {
    pub fn with_capacity(dim: usize, m: usize) -> Self {
        Self {
            dim,
            log_weights: Vec::with_capacity(m),
            scores: Vec::with_capacity(m * dim),
        }
    }

    pub fn from_parts(dim: usize, log_weights: Vec<f64>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != log_weights.len() * dim {
            return Err(Error::Dimension {
                what: "inner scores",
                expected: log_weights.len() * dim,
                got: scores.len(),
            });
        }
        Ok(Self {
            dim,
            log_weights,
            scores,
        })
    }

    pub fn push(&mut self, log_weight: f64, score: &[f64]) {
        debug_assert_eq!(score.len(), self.dim);
        self.log_weights.push(log_weight);
        self.scores.extend_from_slice(score);
    }

    /// Appends an empty score row for in-place filling.
    pub(crate) fn push_row(&mut self) -> &mut [f64] {
        let start = self.scores.len();
        self.scores.resize(start + self.dim, 0.0);
        &mut self.scores[start..]
    }

    pub(crate) fn push_log_weight(&mut self, a: f64) {
        self.log_weights.push(a);
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn score(&self, m: usize) -> &[f64] {
        &self.scores[m * self.dim..(m + 1) * self.dim]
    }
}

/// `log ϱ` and the ratio `∇ϱ / ϱ`, a convex combination of the scores.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerRatio {
    pub log_rho_bar: f64,
    pub ratio: Vec<f64>,
}

/// Weighted sums over a subset of the batch, shifted by `exp(-shift)`:
/// `sum = Σ e^{a_m − shift}`, `numer = Σ e^{a_m − shift} score_m`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WeightedSums {
    count: usize,
    shift: f64,
    sum: f64,
    numer: Vec<f64>,
    /// `Σ e^{a_m − shift} |score_m|`, the rounding scale of `numer`.
    abs_numer: Vec<f64>,
}

impl WeightedSums {
    pub(crate) fn over(batch: &InnerBatch, range: Range<usize>) -> Result<Self> {
        if range.is_empty() {
            return Err(Error::Dimension {
                what: "inner batch",
                expected: 1,
                got: 0,
            });
        }
        let shift = batch.log_weights[range.clone()]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            return Err(Error::Numerical {
                context: "inner log-weights",
                inputs: batch.log_weights[range].to_vec(),
            });
        }
        let mut sum = 0.0;
        let mut numer = vec![0.0; batch.dim];
        let mut abs_numer = vec![0.0; batch.dim];
        for m in range.clone() {
            let w = (batch.log_weights[m] - shift).exp();
            sum += w;
            for ((n, a), s) in numer.iter_mut().zip(abs_numer.iter_mut()).zip(batch.score(m)) {
                *n += w * s;
                *a += w * s.abs();
            }
        }
        Ok(Self {
            count: range.len(),
            shift,
            sum,
            numer,
            abs_numer,
        })
    }

    /// Sums over the union of two disjoint subsets.
    pub(crate) fn merge(&self, other: &Self) -> Self {
        let shift = self.shift.max(other.shift);
        let (fa, fb) = ((self.shift - shift).exp(), (other.shift - shift).exp());
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * fa + y * fb).collect();
        Self {
            count: self.count + other.count,
            shift,
            sum: self.sum * fa + other.sum * fb,
            numer: zip(&self.numer, &other.numer),
            abs_numer: zip(&self.abs_numer, &other.abs_numer),
        }
    }

    pub(crate) fn log_rho_bar(&self) -> f64 {
        self.shift + (self.sum / self.count as f64).ln()
    }

    pub(crate) fn ratio(&self) -> Vec<f64> {
        self.numer.iter().map(|n| n / self.sum).collect()
    }

    pub(crate) fn to_ratio(&self) -> InnerRatio {
        InnerRatio {
            log_rho_bar: self.log_rho_bar(),
            ratio: self.ratio(),
        }
    }

    /// Linear-space averages `(ϱ, ∇ϱ, |∇ϱ|)` rescaled by `exp(-shift)`.
    fn averages_at(&self, shift: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let f = (self.shift - shift).exp() / self.count as f64;
        (
            self.sum * f,
            self.numer.iter().map(|n| n * f).collect(),
            self.abs_numer.iter().map(|n| n * f).collect(),
        )
    }
}

/// `log ϱ = logsumexp(a) − log M` and the softmax-weighted mean score.
pub fn inner_ratio(batch: &InnerBatch) -> Result<InnerRatio> {
    Ok(WeightedSums::over(batch, 0..batch.len())?.to_ratio())
}

/// Relative residuals of the antithetic identities
/// `ϱ_fine = (ϱ_a + ϱ_b)/2` and `∇ϱ_fine = (∇ϱ_a + ∇ϱ_b)/2`, with the fine
/// quantities summed directly over the whole batch.
///
/// The gradient residual is measured against `Σ w_m |score_m|`, since the
/// signed numerators may cancel to zero.
pub fn antithetic_identity_residual(batch: &InnerBatch) -> Result<(f64, f64)> {
    let m = batch.len();
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::Dimension {
            what: "antithetic batch (even size)",
            expected: m + m % 2,
            got: m,
        });
    }
    let fine = WeightedSums::over(batch, 0..m)?;
    let a = WeightedSums::over(batch, 0..m / 2)?;
    let b = WeightedSums::over(batch, m / 2..m)?;
    let shift = fine.shift;
    let (rho_f, num_f, scale) = fine.averages_at(shift);
    let (rho_a, num_a, _) = a.averages_at(shift);
    let (rho_b, num_b, _) = b.averages_at(shift);
    let rho_res = (rho_f - 0.5 * (rho_a + rho_b)).abs() / rho_f;
    let grad_res = num_f
        .iter()
        .zip(num_a.iter().zip(&num_b))
        .zip(&scale)
        .map(|((f, (x, y)), s)| {
            let diff = (f - 0.5 * (x + y)).abs();
            if *s > 0.0 {
                diff / s
            } else {
                diff
            }
        })
        .fold(0.0, f64::max);
    Ok((rho_res, grad_res))
}
