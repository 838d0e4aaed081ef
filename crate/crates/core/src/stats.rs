//! Small statistics helpers shared by estimators and diagnostics.

/// Running sums for the mean and standard error of a scalar stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Componentwise moments of a vector-valued stream.
#[derive(Debug, Clone)]
pub struct VecMoments {
    parts: Vec<Moments>,
}

impl VecMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            parts: vec![Moments::default(); dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.parts.len());
        for (m, &v) in self.parts.iter_mut().zip(x) {
            m.push(v);
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.parts.iter().map(Moments::mean).collect()
    }

    pub fn std_error(&self) -> Vec<f64> {
        self.parts.iter().map(Moments::std_error).collect()
    }
}

/// Ordinary least-squares fit `y ≈ intercept + slope * x`.
/// Returns `None` with fewer than two distinct abscissae.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

pub fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
