//! Threshold calibration: choose `log_eps` so the simulated `E[tau]` meets a
//! target blocklength.
//!
//! Every evaluation reuses the same trial seeds, so each trial's stopping
//! time is a nondecreasing function of `log_eps` and the estimated mean is
//! monotone without Monte Carlo noise between evaluations.

use super::trial::{run_trials, Scheme, TrialOutcome};
use super::SchemeError;
use crate::stats::{mean_ci, MeanCi};

/// Lower bracket end sits this far above `Z0`.
pub(crate) const BRACKET_OFFSET: f64 = 0.01;
const MAX_EVALUATIONS: usize = 80;
pub const MIN_TRIALS: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationStage {
    pub trials: u64,
    /// `(log_eps, mean tau)` in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub log_eps: f64,
    pub mean_tau: MeanCi,
    /// Outcomes of the final evaluation, in trial order.
    pub outcomes: Vec<TrialOutcome>,
    /// Whether the stopping rule was met before the evaluation budget ran out.
    pub converged: bool,
    pub stages: Vec<CalibrationStage>,
}

struct Eval {
    log_eps: f64,
    stats: MeanCi,
    outcomes: Vec<TrialOutcome>,
}

impl Eval {
    fn excess(&self, target: f64) -> f64 {
        if self.stats.n == 0 {
            f64::INFINITY
        } else {
            self.stats.mean - target
        }
    }
}

struct Stage<'a> {
    scheme: &'a Scheme,
    trials: u64,
    seed: u64,
    target: f64,
    tol_rel: f64,
    record: CalibrationStage,
}

impl Stage<'_> {
    fn eval(&mut self, log_eps: f64) -> Eval {
        let outcomes = run_trials(&self.scheme.with_log_eps(log_eps), self.trials, self.seed);
        let stats = mean_ci(outcomes.iter().filter(|o| !o.aborted).map(|o| o.tau_total as f64));
        self.record.evaluations.push((log_eps, stats.mean));
        Eval {
            log_eps,
            stats,
            outcomes,
        }
    }

    /// Within `tol_rel` of the target and the 95% interval covers it.
    fn done(&self, e: &Eval) -> bool {
        let err = e.excess(self.target).abs();
        err <= self.tol_rel * self.target && err <= e.stats.half_width
    }

    /// Illinois false position between `lo` (short) and `hi` (long).
    fn refine(&mut self, mut lo: Eval, mut hi: Eval) -> (Eval, bool) {
        let mut f_lo = lo.excess(self.target);
        let mut f_hi = hi.excess(self.target);
        let mut last_side = 0i8;
        for k in 0..MAX_EVALUATIONS {
            let width = hi.log_eps - lo.log_eps;
            if width <= 1e-9 * hi.log_eps.abs().max(1.0) {
                break;
            }
            let mut x = hi.log_eps - f_hi * width / (f_hi - f_lo);
            // Plain bisection every third step guards against stalls on the
            // step-function mean.
            if !x.is_finite() || x <= lo.log_eps || x >= hi.log_eps || k % 3 == 2 {
                x = lo.log_eps + 0.5 * width;
            }
            let e = self.eval(x);
            if self.done(&e) {
                return (e, true);
            }
            let f = e.excess(self.target);
            if f < 0.0 {
                if last_side == -1 {
                    f_hi *= 0.5;
                }
                lo = e;
                f_lo = f;
                last_side = -1;
            } else {
                if last_side == 1 {
                    f_lo *= 0.5;
                }
                hi = e;
                f_hi = f;
                last_side = 1;
            }
        }
        let best = if lo.excess(self.target).abs() <= hi.excess(self.target).abs() {
            lo
        } else {
            hi
        };
        (best, false)
    }

    /// Grow a bracket outward from `start` within `[min, max]`.
    fn bracket_around(&mut self, start: Eval, min: f64, max: f64) -> Result<(Eval, Eval), Eval> {
        let mut step = (0.02 * start.log_eps).max(1.0);
        let short = start.excess(self.target) < 0.0;
        let mut inner = start;
        loop {
            let x = if short {
                (inner.log_eps + step).min(max)
            } else {
                (inner.log_eps - step).max(min)
            };
            let e = self.eval(x);
            let crossed = (e.excess(self.target) < 0.0) != short;
            if crossed || self.done(&e) {
                return Ok(if short { (inner, e) } else { (e, inner) });
            }
            if x == max || x == min {
                return Err(e);
            }
            inner = e;
            step *= 2.0;
        }
    }
}

/// Bisect `log_eps` on `[Z0 + 0.01, 10·(B/C)·N·ρ]` until the mean total
/// blocklength is within `tol_rel` of `target_n` with the 95% interval
/// covering it.
///
/// A pilot stage with a tenth of the trials (at least 1000) locates the
/// threshold; the full stage then brackets around it and refines.
pub fn calibrate_threshold(
    scheme: &Scheme,
    target_n: f64,
    trials: u64,
    tol_rel: f64,
    seed: u64,
) -> Result<Calibration, SchemeError> {
    if !(target_n > 0.0 && tol_rel > 0.0) {
        return Err(SchemeError::InvalidParams(format!(
            "need target N > 0 and tol_rel > 0, got {target_n}, {tol_rel}"
        )));
    }
    if trials < MIN_TRIALS {
        return Err(SchemeError::InvalidParams(format!(
            "calibration needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let p = scheme.params();
    let min = p.z0 + BRACKET_OFFSET;
    let max = 10.0 * scheme.b_over_c() * p.n_target * p.rho;
    let pilot_trials = (trials / 10).max(MIN_TRIALS);
    let mut stages = Vec::new();

    let mut pilot = Stage {
        scheme,
        trials: pilot_trials.min(trials),
        seed,
        target: target_n,
        tol_rel,
        record: CalibrationStage {
            trials: pilot_trials.min(trials),
            evaluations: Vec::new(),
        },
    };
    let lo = pilot.eval(min);
    if lo.excess(target_n) >= 0.0 && !pilot.done(&lo) {
        return Err(SchemeError::BracketNotFound {
            log_eps: min,
            mean_tau: lo.stats.mean,
            target: target_n,
        });
    }
    let (mut best, mut converged) = if pilot.done(&lo) {
        (lo, true)
    } else {
        if !(max > min) {
            return Err(SchemeError::BracketNotFound {
                log_eps: max,
                mean_tau: lo.stats.mean,
                target: target_n,
            });
        }
        let hi = pilot.eval(max);
        if hi.excess(target_n) < 0.0 && !pilot.done(&hi) {
            return Err(SchemeError::BracketNotFound {
                log_eps: max,
                mean_tau: hi.stats.mean,
                target: target_n,
            });
        }
        if pilot.done(&hi) {
            (hi, true)
        } else {
            pilot.refine(lo, hi)
        }
    };
    stages.push(pilot.record);

    if pilot_trials < trials {
        let mut full = Stage {
            scheme,
            trials,
            seed,
            target: target_n,
            tol_rel,
            record: CalibrationStage {
                trials,
                evaluations: Vec::new(),
            },
        };
        let start = full.eval(best.log_eps);
        (best, converged) = if full.done(&start) {
            (start, true)
        } else {
            match full.bracket_around(start, min, max) {
                Ok((lo, _)) if full.done(&lo) => (lo, true),
                Ok((_, hi)) if full.done(&hi) => (hi, true),
                Ok((lo, hi)) => full.refine(lo, hi),
                Err(e) => {
                    return Err(SchemeError::BracketNotFound {
                        log_eps: e.log_eps,
                        mean_tau: e.stats.mean,
                        target: target_n,
                    })
                }
            }
        };
        stages.push(full.record);
    }

    Ok(Calibration {
        log_eps: best.log_eps,
        mean_tau: best.stats,
        outcomes: best.outcomes,
        converged,
        stages,
    })
}
