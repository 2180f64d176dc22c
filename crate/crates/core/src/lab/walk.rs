use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream, trial_seed, Stream};
use crate::stats::mean_ci;

/// Walks still running after this many steps are dropped and counted.
pub const STEP_GUARD: u64 = 10_000_000;
pub const MIN_TRIALS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwoRegime {
    /// Drift `K1` below zero and `K2` at or above it; stop at `ξ ≥ T`.
    SingleUp,
    /// Drift `+K1` until `ξ ≥ T0`, then `−K2`; stop at `ξ ≤ T` after that.
    UpThenDown,
    /// Drift `+K1` until `ξ ≥ T0`, then `+K2`; stop at `ξ ≥ T` after that.
    UpThenUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepLaw {
    /// `±K3` with `P(+K3) = (1 + d/K3)/2`.
    TwoPoint,
    /// Uniform on `[d − w, d + w]` with `w = K3 − |d|`.
    TruncatedUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftWalkSpec {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub t: f64,
    pub t0: f64,
    pub xi0: f64,
    pub regime: TwoRegime,
    pub step_law: StepLaw,
}

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error("invalid walk: {0}")]
    Invalid(String),
    #[error("need at least {MIN_TRIALS} trials, got {0}")]
    TooFewTrials(u64),
    #[error("all {0} walks hit the step guard")]
    AllGuarded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkResult {
    /// Mean of `τ` (SingleUp) or `τ − τ0` (two-regime walks).
    pub mean_tau: f64,
    pub ci95: f64,
    /// Bound on `mean_tau`; the unknown additive term is taken as zero for
    /// the single-regime walk.
    pub bound: f64,
    pub completed: u64,
    pub guard_hits: u64,
}

impl DriftWalkSpec {
    pub fn validate(&self) -> Result<(), WalkError> {
        let bad = |m: &str| Err(WalkError::Invalid(m.to_string()));
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0) {
            return bad("K1, K2, K3 must be positive");
        }
        if self.k1 > self.k3 || self.k2 > self.k3 {
            return bad("drifts cannot exceed the step bound K3");
        }
        if ![self.t, self.t0, self.xi0].iter().all(|v| v.is_finite()) {
            return bad("thresholds must be finite");
        }
        match self.regime {
            TwoRegime::UpThenDown if self.t > self.t0 => bad("UpThenDown needs T <= T0"),
            TwoRegime::UpThenUp if self.t < self.t0 => bad("UpThenUp needs T >= T0"),
            _ => Ok(()),
        }
    }

    /// Right-hand side of the stopping-time bound.
    pub fn bound(&self) -> f64 {
        match self.regime {
            TwoRegime::SingleUp => {
                let start = if self.xi0 < 0.0 { self.xi0 / self.k1 } else { self.xi0 / self.k2 };
                self.t.abs() / self.k2 - start
            }
            TwoRegime::UpThenDown | TwoRegime::UpThenUp => ((self.t0 - self.t).abs() + 3.0 * self.k3) / self.k2,
        }
    }

    fn step<R: Rng>(&self, drift: f64, rng: &mut R) -> f64 {
        match self.step_law {
            StepLaw::TwoPoint => {
                if rng.gen::<f64>() < 0.5 * (1.0 + drift / self.k3) {
                    self.k3
                } else {
                    -self.k3
                }
            }
            StepLaw::TruncatedUniform => {
                let w = self.k3 - drift.abs();
                drift + w * (2.0 * rng.gen::<f64>() - 1.0)
            }
        }
    }

    /// One walk; `None` if it hits the guard.
    fn run<R: Rng>(&self, rng: &mut R) -> Option<u64> {
        let mut xi = self.xi0;
        let mut n = 0u64;
        match self.regime {
            TwoRegime::SingleUp => {
                while xi < self.t {
                    if n == STEP_GUARD {
                        return None;
                    }
                    let d = if xi < 0.0 { self.k1 } else { self.k2 };
                    xi += self.step(d, rng);
                    n += 1;
                }
                Some(n)
            }
            TwoRegime::UpThenDown | TwoRegime::UpThenUp => {
                while xi < self.t0 {
                    if n == STEP_GUARD {
                        return None;
                    }
                    xi += self.step(self.k1, rng);
                    n += 1;
                }
                let tau0 = n;
                let down = self.regime == TwoRegime::UpThenDown;
                let stopped = |xi: f64| if down { xi <= self.t } else { xi >= self.t };
                let d = if down { -self.k2 } else { self.k2 };
                while !stopped(xi) {
                    if n == STEP_GUARD {
                        return None;
                    }
                    xi += self.step(d, rng);
                    n += 1;
                }
                Some(n - tau0)
            }
        }
    }
}

/// Monte Carlo estimate of the (post-`τ0`) stopping time.
pub fn simulate_stopping(spec: &DriftWalkSpec, trials: u64, seed: u64) -> Result<WalkResult, WalkError> {
    spec.validate()?;
    if trials < MIN_TRIALS {
        return Err(WalkError::TooFewTrials(trials));
    }
    let taus: Vec<Option<u64>> = (0..trials)
        .into_par_iter()
        .map(|i| spec.run(&mut stream(trial_seed(seed, i), 0, Stream::Aux)))
        .collect();
    let guard_hits = taus.iter().filter(|t| t.is_none()).count() as u64;
    if guard_hits == trials {
        return Err(WalkError::AllGuarded(trials));
    }
    let stats = mean_ci(taus.iter().flatten().map(|&t| t as f64));
    Ok(WalkResult {
        mean_tau: stats.mean,
        ci95: stats.half_width,
        bound: spec.bound(),
        completed: stats.n,
        guard_hits,
    })
}
