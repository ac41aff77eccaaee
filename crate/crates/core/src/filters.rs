//! Measurement smoothing applied by sensor nodes before broadcasting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("rolling window must hold at least one sample")]
    EmptyWindow,
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("invalid noise parameters: q={q}, r={r}")]
    InvalidNoise { q: f64, r: f64 },
}

/// Mean of the most recent `n` samples.
#[derive(Debug, Clone)]
pub struct RollingAverage {
    window: usize,
    samples: VecDeque<f64>,
    sum: f64,
}

impl RollingAverage {
    pub fn new(window: usize) -> Result<Self, FilterError> {
        if window == 0 {
            return Err(FilterError::EmptyWindow);
        }
        Ok(RollingAverage {
            window,
            samples: VecDeque::with_capacity(window),
            sum: 0.0,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn update(&mut self, sample: f64) -> f64 {
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        // Summing the window afresh keeps the result free of accumulated
        // cancellation error from a running total.
        self.sum = self.samples.iter().sum();
        self.sum / self.samples.len() as f64
    }

    pub fn value(&self) -> Option<f64> {
        (!self.samples.is_empty()).then(|| self.sum / self.samples.len() as f64)
    }
}

/// `out = alpha * in + (1 - alpha) * out_prev`, seeded by the first sample.
#[derive(Debug, Clone)]
pub struct ExponentialAverage {
    alpha: f64,
    state: Option<f64>,
}

impl ExponentialAverage {
    pub fn new(alpha: f64) -> Result<Self, FilterError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(FilterError::AlphaOutOfRange(alpha));
        }
        Ok(ExponentialAverage { alpha, state: None })
    }

    pub fn update(&mut self, sample: f64) -> f64 {
        let out = match self.state {
            None => sample,
            Some(prev) => self.alpha * sample + (1.0 - self.alpha) * prev,
        };
        self.state = Some(out);
        out
    }

    pub fn value(&self) -> Option<f64> {
        self.state
    }
}

/// Scalar Kalman filter with a random-walk process model.
#[derive(Debug, Clone)]
pub struct Kalman1D {
    q: f64,
    r: f64,
    estimate: Option<f64>,
    variance: f64,
    last_gain: f64,
}

impl Kalman1D {
    /// The first measurement becomes the estimate with variance `r`.
    pub fn new(q: f64, r: f64) -> Result<Self, FilterError> {
        if !(q >= 0.0 && q.is_finite() && r > 0.0 && r.is_finite()) {
            return Err(FilterError::InvalidNoise { q, r });
        }
        Ok(Kalman1D {
            q,
            r,
            estimate: None,
            variance: r,
            last_gain: 0.0,
        })
    }

    /// Start from an explicit prior instead of the first measurement.
    pub fn with_prior(q: f64, r: f64, x0: f64, p0: f64) -> Result<Self, FilterError> {
        let mut k = Self::new(q, r)?;
        k.estimate = Some(x0);
        k.variance = p0.max(0.0);
        Ok(k)
    }

    pub fn update(&mut self, z: f64) -> f64 {
        let Some(x) = self.estimate else {
            self.estimate = Some(z);
            self.variance = self.r;
            return z;
        };
        let p = self.variance + self.q;
        let k = p / (p + self.r);
        let x = x + k * (z - x);
        self.variance = (1.0 - k) * p;
        self.last_gain = k;
        self.estimate = Some(x);
        x
    }

    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn gain(&self) -> f64 {
        self.last_gain
    }
}

/// Filter choice as it appears in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum FilterSpec {
    #[default]
    None,
    Rolling {
        window: usize,
    },
    Exponential {
        alpha: f64,
    },
    Kalman {
        q: f64,
        r: f64,
    },
}

#[derive(Debug, Clone)]
pub enum Filter {
    Passthrough,
    Rolling(RollingAverage),
    Exponential(ExponentialAverage),
    Kalman(Kalman1D),
}

impl Filter {
    pub fn from_spec(spec: &FilterSpec) -> Result<Self, FilterError> {
        Ok(match *spec {
            FilterSpec::None => Filter::Passthrough,
            FilterSpec::Rolling { window } => Filter::Rolling(RollingAverage::new(window)?),
            FilterSpec::Exponential { alpha } => Filter::Exponential(ExponentialAverage::new(alpha)?),
            FilterSpec::Kalman { q, r } => Filter::Kalman(Kalman1D::new(q, r)?),
        })
    }

    pub fn update(&mut self, sample: f64) -> f64 {
        match self {
            Filter::Passthrough => sample,
            Filter::Rolling(f) => f.update(sample),
            Filter::Exponential(f) => f.update(sample),
            Filter::Kalman(f) => f.update(sample),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rolling_constant_and_pair() {
        let mut f = RollingAverage::new(4).unwrap();
        for _ in 0..10 {
            assert_eq!(f.update(3.5), 3.5);
        }
        let mut f = RollingAverage::new(2).unwrap();
        assert_eq!(f.update(1.0), 1.0);
        assert_eq!(f.update(3.0), 2.0);
        assert!(RollingAverage::new(0).is_err());
    }

    #[test]
    fn exponential_hand_recursion() {
        let mut f = ExponentialAverage::new(0.5).unwrap();
        assert_eq!(f.update(0.0), 0.0);
        assert_eq!(f.update(10.0), 5.0);
        assert_eq!(f.update(10.0), 7.5);

        let mut one = ExponentialAverage::new(1.0).unwrap();
        let mut zero = ExponentialAverage::new(0.0).unwrap();
        for x in [4.0, -2.0, 9.0] {
            assert_eq!(one.update(x), x);
            assert_eq!(zero.update(x), 4.0);
        }
        assert_eq!(
            ExponentialAverage::new(1.5).unwrap_err(),
            FilterError::AlphaOutOfRange(1.5)
        );
        assert!(ExponentialAverage::new(-0.1).is_err());
    }

    #[test]
    fn kalman_converges_without_process_noise() {
        let mut f = Kalman1D::with_prior(0.0, 1.0, 0.0, 1.0).unwrap();
        let mut err = 1.0;
        let mut p = f.variance();
        for _ in 0..50 {
            let x = f.update(1.0);
            assert!((1.0 - x).abs() < err);
            assert!(f.variance() < p);
            err = (1.0 - x).abs();
            p = f.variance();
        }
    }

    #[test]
    fn kalman_barely_moves_with_huge_measurement_noise() {
        let mut f = Kalman1D::with_prior(0.0, 1e12, 0.0, 1.0).unwrap();
        let x = f.update(5.0);
        assert!(x.abs() < 1e-6 * 5.0);
    }

    #[test]
    fn kalman_first_measurement_seeds() {
        let mut f = Kalman1D::new(0.01, 1.0).unwrap();
        assert_eq!(f.update(3.0), 3.0);
        assert_eq!(f.variance(), 1.0);
        assert!(Kalman1D::new(0.0, 0.0).is_err());
        assert!(Kalman1D::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn spec_builds_filters() {
        let mut f = Filter::from_spec(&FilterSpec::Rolling { window: 2 }).unwrap();
        f.update(2.0);
        assert_eq!(f.update(4.0), 3.0);
        assert!(Filter::from_spec(&FilterSpec::Exponential { alpha: 2.0 }).is_err());
    }
}
