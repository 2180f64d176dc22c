//! Interval estimates shared by the lab and the harness.

use serde::{Deserialize, Serialize};

use crate::numeric::logsumexp;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson(successes: u64, trials: u64) -> Interval {
    assert!(trials > 0 && successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval {
        lower: (centre - half).max(0.0),
        upper: (centre + half).min(1.0),
    }
}

/// Sample mean with a normal-approximation 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub n: u64,
}

impl MeanCi {
    pub fn interval(&self) -> Interval {
        Interval {
            lower: self.mean - self.half_width,
            upper: self.mean + self.half_width,
        }
    }
}

/// Welford accumulation in iteration order, so results are reproducible.
pub fn mean_ci<I: IntoIterator<Item = f64>>(values: I) -> MeanCi {
    let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    let half_width = if n > 1 {
        Z95 * (m2 / (n - 1) as f64 / n as f64).sqrt()
    } else {
        f64::INFINITY
    };
    MeanCi {
        mean: if n > 0 { mean } else { f64::NAN },
        half_width,
        n,
    }
}

/// Mean of `exp(l_i)` held in logs, for quantities far below `f64` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogMean {
    pub log_mean: f64,
    /// 95% interval on `log_mean`; the lower end is `-inf` when the
    /// relative error is too large to bound it.
    pub log_lower: f64,
    pub log_upper: f64,
    pub n: u64,
}

pub fn log_mean(logs: &[f64]) -> LogMean {
    let n = logs.len() as u64;
    let lse = logsumexp(logs);
    let log_mean = lse - (n as f64).ln();
    if !log_mean.is_finite() || n < 2 {
        return LogMean {
            log_mean,
            log_lower: f64::NEG_INFINITY,
            log_upper: if n < 2 { f64::INFINITY } else { log_mean },
            n,
        };
    }
    // Relative standard error from values scaled by the mean.
    let scaled = mean_ci(logs.iter().map(|l| (l - log_mean).exp()));
    let rel = scaled.half_width;
    LogMean {
        log_mean,
        log_lower: if rel < 1.0 { (1.0 - rel).ln() + log_mean } else { f64::NEG_INFINITY },
        log_upper: rel.ln_1p() + log_mean,
        n,
    }
}
