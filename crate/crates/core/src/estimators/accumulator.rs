use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::LevelSample;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Streaming moments of the level differences on one level, plus the first
/// two moments of the fine and coarse terms separately.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelAccumulator {
    pub level: usize,
    pub n: u64,
    power_sums: [CompensatedSum; 4],
    fine: [CompensatedSum; 2],
    coarse: [CompensatedSum; 2],
    n_coarse: u64,
    pub cost_units: u64,
}

/// Minimum sample count for a reported kurtosis.
pub const KURTOSIS_MIN_SAMPLES: u64 = 100;

impl LevelAccumulator {
    pub fn new(level: usize) -> Self {
        LevelAccumulator { level, ..Default::default() }
    }

    pub fn push(&mut self, s: &LevelSample) -> Result<()> {
        if !s.y.is_finite() {
            return Err(Error::NonFiniteSample(s.y));
        }
        let y = s.y;
        let y2 = y * y;
        self.power_sums[0].add(y);
        self.power_sums[1].add(y2);
        self.power_sums[2].add(y2 * y);
        self.power_sums[3].add(y2 * y2);
        self.fine[0].add(s.fine);
        self.fine[1].add(s.fine * s.fine);
        if let Some(c) = s.coarse {
            self.coarse[0].add(c);
            self.coarse[1].add(c * c);
            self.n_coarse += 1;
        }
        self.n += 1;
        self.cost_units += s.cost;
        Ok(())
    }

    pub fn merge(&mut self, other: &LevelAccumulator) {
        for (a, b) in self.power_sums.iter_mut().zip(&other.power_sums) {
            a.merge(b);
        }
        for (a, b) in self.fine.iter_mut().zip(&other.fine) {
            a.merge(b);
        }
        for (a, b) in self.coarse.iter_mut().zip(&other.coarse) {
            a.merge(b);
        }
        self.n += other.n;
        self.n_coarse += other.n_coarse;
        self.cost_units += other.cost_units;
    }

    pub fn sum(&self, power: usize) -> f64 {
        self.power_sums[power - 1].value()
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.sum(1) / self.n as f64
    }

    /// Unbiased sample variance (0 with fewer than two samples).
    pub fn variance(&self) -> f64 {
        sample_variance(self.n, self.sum(1), self.sum(2))
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    /// Fourth central moment over squared second central moment, or `None`
    /// when there are too few samples or the variance is at rounding level.
    pub fn kurtosis(&self) -> Option<f64> {
        if self.n < KURTOSIS_MIN_SAMPLES {
            return None;
        }
        let n = self.n as f64;
        let mu = self.sum(1) / n;
        let r2 = self.sum(2) / n;
        let r3 = self.sum(3) / n;
        let r4 = self.sum(4) / n;
        let m2 = r2 - mu * mu;
        if !(m2 > 1e-12 * r2) {
            return None;
        }
        let m4 = r4 - 4.0 * mu * r3 + 6.0 * mu * mu * r2 - 3.0 * mu.powi(4);
        Some((m4 / (m2 * m2)).max(1.0))
    }

    pub fn cost_per_sample(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.cost_units as f64 / self.n as f64
    }

    pub fn fine_mean(&self) -> f64 {
        self.fine[0].value() / self.n.max(1) as f64
    }

    pub fn fine_variance(&self) -> f64 {
        sample_variance(self.n, self.fine[0].value(), self.fine[1].value())
    }

    /// `None` on level 0, which has no coarse term.
    pub fn coarse_mean(&self) -> Option<f64> {
        (self.n_coarse > 0).then(|| self.coarse[0].value() / self.n_coarse as f64)
    }

    pub fn coarse_variance(&self) -> Option<f64> {
        (self.n_coarse > 0).then(|| sample_variance(self.n_coarse, self.coarse[0].value(), self.coarse[1].value()))
    }
}

fn sample_variance(n: u64, s1: f64, s2: f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    ((s2 - s1 * s1 / nf) / (nf - 1.0)).max(0.0)
}

/// Sum of per-level means, clamped to [0, 1] for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Telescoped {
    pub raw: f64,
    pub clamped: f64,
}

pub fn telescope(per_level_means: &[f64]) -> Telescoped {
    assert!(!per_level_means.is_empty(), "telescoping sum needs at least one level");
    let mut acc = CompensatedSum::default();
    for &m in per_level_means {
        acc.add(m);
    }
    let raw = acc.value();
    Telescoped { raw, clamped: raw.clamp(0.0, 1.0) }
}
