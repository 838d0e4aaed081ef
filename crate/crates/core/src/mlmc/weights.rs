use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Levels above this are treated as a sampler fault rather than drawn.
pub const LEVEL_CAP: u32 = 60;

/// Randomized-level distribution `w_ℓ ∝ 2^{-τℓ}` with base inner count `M₀`.
///
/// With `w0` set, level 0 gets exactly that mass and the geometric tail
/// `ℓ ≥ 1` is renormalized to `1 − w0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelWeights {
    m0: u64,
    tau: f64,
    w0: Option<f64>,
}

impl LevelWeights {
    pub fn new(m0: u64, tau: f64, w0: Option<f64>) -> Result<Self> {
        if m0 == 0 {
            return Err(Error::config("M0 must be at least 1"));
        }
        if !(tau > 1.0) || !tau.is_finite() {
            return Err(Error::config(format!(
                "tau = {tau}: the expected cost of the randomized estimator is finite only for tau > 1"
            )));
        }
        if let Some(w) = w0 {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::config(format!("w0 = {w} must lie in (0, 1]")));
            }
        }
        Ok(Self { m0, tau, w0 })
    }

    pub fn m0(&self) -> u64 {
        self.m0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn w0(&self) -> Option<f64> {
        self.w0
    }

    /// Geometric ratio `2^{-τ}`.
    fn ratio(&self) -> f64 {
        (-self.tau).exp2()
    }

    pub fn weight(&self, level: u32) -> f64 {
        let r = self.ratio();
        match self.w0 {
            None => (1.0 - r) * r.powi(level as i32),
            Some(w0) if level == 0 => w0,
            Some(w0) => (1.0 - w0) * (1.0 - r) * r.powi(level as i32 - 1),
        }
    }

    /// Inner samples used by a level-`level` correction: `M₀ 2^ℓ`.
    pub fn inner_count(&self, level: u32) -> u64 {
        self.m0 << level
    }

    /// Exact inverse-CDF draw of the level.
    pub fn sample_level<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u32> {
        let u: f64 = rng.random();
        let (offset, v) = match self.w0 {
            None => (0, 1.0 - u),
            Some(w0) if u < w0 => return Ok(0),
            Some(w0) => (1, 1.0 - (u - w0) / (1.0 - w0)),
        };
        // P(k ≥ j) = P(v ≤ r^j) = r^j for v uniform on (0, 1].
        let k = (v.ln() / self.ratio().ln()).floor();
        if !(k <= f64::from(LEVEL_CAP - offset)) {
            return Err(Error::LevelCap { cap: LEVEL_CAP });
        }
        Ok(k as u32 + offset)
    }

    /// Expected inner samples per outer sample, `M₀ Σ_ℓ 2^ℓ w_ℓ`.
    pub fn expected_cost(&self) -> f64 {
        let r = self.ratio();
        let m0 = self.m0 as f64;
        match self.w0 {
            None => m0 * (1.0 - r) / (1.0 - 2.0 * r),
            Some(w0) => m0 * (w0 + (1.0 - w0) * (1.0 - r) * 2.0 / (1.0 - 2.0 * r)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Phase, StreamKey};

    #[test]
    fn level_zero_probability() {
        let w = LevelWeights::new(1, 1.5, None).unwrap();
        assert!((w.weight(0) - (1.0 - 2f64.powf(-1.5))).abs() < 1e-15);
        assert!((w.weight(0) - 0.6464).abs() < 1e-4);
    }

    #[test]
    fn weights_sum_to_one() {
        for w in [
            LevelWeights::new(1, 1.5, None).unwrap(),
            LevelWeights::new(4, 1.2, Some(0.9)).unwrap(),
            LevelWeights::new(1, 3.0, Some(0.3)).unwrap(),
        ] {
            let total: f64 = (0..400).map(|l| w.weight(l)).sum();
            assert!((total - 1.0).abs() < 1e-12, "{total}");
            assert!((0..40).all(|l| w.weight(l) > 0.0));
        }
    }

    #[test]
    fn expected_cost_closed_forms() {
        let plain = LevelWeights::new(1, 1.5, None).unwrap();
        assert_eq!(format!("{:.2}", plain.expected_cost()), "2.21");
        let pk = LevelWeights::new(1, 1.5, Some(0.9)).unwrap();
        assert_eq!(format!("{:.2}", pk.expected_cost()), "1.34");
        let degenerate = LevelWeights::new(7, 1.5, Some(1.0)).unwrap();
        assert_eq!(degenerate.expected_cost(), 7.0);
        // Against a direct truncated sum.
        let direct: f64 = (0..200).map(|l| 2f64.powi(l as i32) * pk.weight(l)).sum();
        assert!((direct - pk.expected_cost()).abs() < 1e-10);
    }

    #[test]
    fn tau_at_or_below_one_is_rejected() {
        for tau in [1.0, 0.5, f64::NAN] {
            assert!(matches!(LevelWeights::new(1, tau, None), Err(Error::Config(_))));
        }
        assert!(LevelWeights::new(0, 1.5, None).is_err());
        assert!(LevelWeights::new(1, 1.5, Some(0.0)).is_err());
    }

    #[test]
    fn degenerate_w0_always_samples_zero() {
        let w = LevelWeights::new(1, 1.5, Some(1.0)).unwrap();
        let key = StreamKey::new(1, Phase::Test, 0);
        let mut rng = key.rng(0);
        assert!((0..10_000).all(|_| w.sample_level(&mut rng).unwrap() == 0));
    }

    #[test]
    fn empirical_frequencies_match_weights() {
        let n = 1_000_000u32;
        for (seed, w) in [
            (1, LevelWeights::new(1, 1.5, None).unwrap()),
            (2, LevelWeights::new(1, 1.5, Some(0.9)).unwrap()),
        ] {
            let mut rng = StreamKey::new(seed, Phase::Test, 0).rng(0);
            let mut counts = [0u32; 7];
            for _ in 0..n {
                let l = w.sample_level(&mut rng).unwrap() as usize;
                if l < 7 {
                    counts[l] += 1;
                }
            }
            for (l, &c) in counts.iter().enumerate() {
                let p = w.weight(l as u32);
                let sd = (f64::from(n) * p * (1.0 - p)).sqrt();
                let dev = (f64::from(c) - f64::from(n) * p).abs();
                assert!(dev < 4.0 * sd, "level {l}: {c} vs {}", f64::from(n) * p);
            }
        }
    }
}
