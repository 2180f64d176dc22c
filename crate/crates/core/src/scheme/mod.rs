//! Burnashev's two-phase variable-length feedback scheme.
//!
//! Case 1 (`B* > C`) alternates between a random-partition phase and a
//! binary confirmation phase depending on whether any posterior has reached
//! `p0`, and stops when some log-odds reaches `log_eps`. Case 2 commits to the
//! leading message once it reaches `p0 = 1 − 1/L` and either accepts it or,
//! when its log-odds falls to `A`, retransmits from scratch.

mod calibrate;
mod p0;
mod trial;

pub use calibrate::{calibrate_threshold, Calibration, CalibrationStage, MIN_TRIALS as MIN_CALIBRATION_TRIALS};
pub use p0::{phase1_z_drift, psi, solve_p0, P0Solution};
pub use trial::{
    phase1_partition, run_trial, run_trials, Phase, Scheme, StepContext, TrialObserver, TrialOutcome,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelInfo, Dmc};
use crate::posterior::PosteriorError;

/// Safety horizon in units of the target blocklength.
pub const DEFAULT_N_MAX_FACTOR: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum SchemeError {
    #[error("channel has B* = {b_star} <= C = {capacity}; the requested operation needs B* > C")]
    WrongRegime { b_star: f64, capacity: f64 },
    #[error("B is infinite; the scheme needs finite divergences")]
    InfiniteB,
    #[error("channel info carries no capacity")]
    MissingCapacity,
    #[error("no (u, v) with psi(u, v) = C: psi(1/2, 0) = {psi_half} exceeds C = {capacity}")]
    NoP0Solution { psi_half: f64, capacity: f64 },
    #[error("threshold -ln(eps) = {0} is not positive; N*rho is too small for this const_q")]
    ThresholdDegenerate(f64),
    #[error("design length L = {0} is below 2, so p0 = 1 - 1/L < 1/2")]
    DesignTooShort(f64),
    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),
    #[error("E[tau] = {mean_tau} at log_eps = {log_eps} does not bracket target {target}")]
    BracketNotFound {
        log_eps: f64,
        mean_tau: f64,
        target: f64,
    },
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `B* > C`: no retransmission.
    Case1,
    /// `B* <= C`: abort threshold and retransmission.
    Case2,
}

impl Regime {
    pub fn for_channel(b_star: f64, capacity: f64) -> Self {
        if b_star > capacity {
            Regime::Case1
        } else {
            Regime::Case2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Closed-form threshold with `const_q` standing in for the unknown constant.
    Theory,
    /// Threshold bisected until the simulated `E[tau]` hits the target.
    Calibrated,
}

/// Choices that are not determined by the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub regime: Option<Regime>,
    pub mode: Mode,
    pub const_q: f64,
    /// Use this phase-1 threshold instead of solving for it (Case 1 only).
    pub p0: Option<f64>,
    pub n_max_factor: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            regime: None,
            mode: Mode::Theory,
            const_q: 0.0,
            p0: None,
            n_max_factor: DEFAULT_N_MAX_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub regime: Regime,
    pub messages: usize,
    /// Target expected blocklength.
    pub n_target: f64,
    pub rho: f64,
    /// Case-2 design length and its backoff.
    pub design_length: Option<f64>,
    pub rho_prime: Option<f64>,
    pub p0: f64,
    pub z0: f64,
    /// Case-2 abort threshold `Z0 / 2`.
    pub abort: Option<f64>,
    pub log_eps: f64,
    pub n_max: u64,
    pub mode: Mode,
    pub const_q: f64,
}

impl SchemeParams {
    /// Derive every schedule value from the channel and the target point.
    ///
    /// In calibrated mode `log_eps` starts at the theory value when that is
    /// usable and at the calibration bracket's lower end otherwise; the
    /// harness then overwrites it.
    pub fn configure(
        dmc: &Dmc,
        info: &ChannelInfo,
        messages: usize,
        n_target: f64,
        rho: f64,
        options: SchemeOptions,
    ) -> Result<Self, SchemeError> {
        let capacity = info.capacity.ok_or(SchemeError::MissingCapacity)?;
        if !info.finite_b {
            return Err(SchemeError::InfiniteB);
        }
        if messages < 2 {
            return Err(SchemeError::InvalidParams(format!("need M >= 2, got {messages}")));
        }
        if !(n_target > 0.0 && rho > 0.0) {
            return Err(SchemeError::InvalidParams(format!(
                "need N > 0 and rho > 0, got N = {n_target}, rho = {rho}"
            )));
        }
        let regime = options.regime.unwrap_or_else(|| Regime::for_channel(info.b_star, capacity));
        let (design_length, rho_prime, p0) = match regime {
            Regime::Case1 => {
                let p0 = match options.p0 {
                    Some(p0) => p0,
                    None => solve_p0(dmc, info, capacity)?.p0,
                };
                (None, None, p0)
            }
            Regime::Case2 => {
                let l = design_length(n_target);
                if l < 2.0 {
                    return Err(SchemeError::DesignTooShort(l));
                }
                (Some(l), Some(rho_prime(rho, capacity, l)), 1.0 - 1.0 / l)
            }
        };
        let z0 = log_odds_of(p0);
        let theory = theory_threshold(info, capacity, regime, n_target, rho, options.const_q);
        let log_eps = match (options.mode, theory) {
            (Mode::Theory, t) => t?,
            (Mode::Calibrated, Ok(t)) if t >= z0 => t,
            (Mode::Calibrated, _) => z0 + calibrate::BRACKET_OFFSET,
        };
        let params = Self {
            regime,
            messages,
            n_target,
            rho,
            design_length,
            rho_prime,
            p0,
            z0,
            abort: (regime == Regime::Case2).then_some(z0 / 2.0),
            log_eps,
            n_max: (options.n_max_factor * n_target).ceil().max(1.0) as u64,
            mode: options.mode,
            const_q: options.const_q,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_log_eps(&self, log_eps: f64) -> Self {
        Self {
            log_eps,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let bad = |msg: String| Err(SchemeError::InvalidParams(msg));
        if self.messages < 2 {
            return bad(format!("need M >= 2, got {}", self.messages));
        }
        if !(0.5..1.0).contains(&self.p0) {
            return bad(format!("p0 = {} outside [1/2, 1)", self.p0));
        }
        if (self.z0 - log_odds_of(self.p0)).abs() > 1e-12 * self.z0.abs().max(1.0) {
            return bad(format!("Z0 = {} disagrees with p0 = {}", self.z0, self.p0));
        }
        // Equality is the degenerate "decide on phase-2 entry" setting.
        if !(self.log_eps >= self.z0) {
            return bad(format!("log_eps = {} below Z0 = {}", self.log_eps, self.z0));
        }
        match (self.regime, self.abort) {
            (Regime::Case1, None) => {}
            (Regime::Case2, Some(a)) if a > 0.0 && a < self.z0 => {}
            (regime, abort) => return bad(format!("abort threshold {abort:?} inconsistent with {regime:?}")),
        }
        if self.n_max == 0 {
            return bad("n_max must be positive".into());
        }
        Ok(())
    }
}

pub fn log_odds_of(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `L` with `L + 3·sqrt(L) = N`.
pub fn design_length(n: f64) -> f64 {
    let s = (-3.0 + (9.0 + 4.0 * n).sqrt()) / 2.0;
    s * s
}

/// `ρ′ = ρ − (3/sqrt(L))·(C − ρ)` with `ρ` the backoff at `N = L + 3·sqrt(L)`.
pub fn rho_prime(rho: f64, capacity: f64, l: f64) -> f64 {
    rho - 3.0 / l.sqrt() * (capacity - rho)
}

/// `−ln ε` before calibration.
///
/// Case 1: `(B/C)·N·ρ − B·q`. Case 2:
/// `(B/p0)·[L·ρ′/C − (1/C − p0/B + 3(1 − p0)/(2B*))·Z0 − q]` with `L` from
/// `N`, `p0 = 1 − 1/L` and `Z0 = ln(L − 1)`.
pub fn theory_threshold(
    info: &ChannelInfo,
    capacity: f64,
    regime: Regime,
    n: f64,
    rho: f64,
    const_q: f64,
) -> Result<f64, SchemeError> {
    if !(n > 0.0 && rho > 0.0) {
        return Err(SchemeError::InvalidParams(format!(
            "need N > 0 and rho > 0, got N = {n}, rho = {rho}"
        )));
    }
    let (b, b_star, c) = (info.b, info.b_star, capacity);
    let value = match regime {
        Regime::Case1 => b / c * n * rho - b * const_q,
        Regime::Case2 => {
            let l = design_length(n);
            if l < 2.0 {
                return Err(SchemeError::DesignTooShort(l));
            }
            let p0 = 1.0 - 1.0 / l;
            let z0 = (l - 1.0).ln();
            let rp = rho_prime(rho, c, l);
            let coeff = 1.0 / c - p0 / b + 3.0 * (1.0 - p0) / (2.0 * b_star);
            b / p0 * (l * rp / c - coeff * z0 - const_q)
        }
    };
    if value > 0.0 {
        Ok(value)
    } else {
        Err(SchemeError::ThresholdDegenerate(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{capacity, DEFAULT_MAX_ITER, DEFAULT_TOL};
    use crate::channel::{compute_info, Dmc};

    pub(crate) fn bsc_info() -> (Dmc, ChannelInfo) {
        let dmc = Dmc::bsc(0.1).unwrap();
        let r = capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let info = compute_info(&dmc).with_capacity(r.capacity, r.px_star);
        (dmc, info)
    }

    #[test]
    fn theory_threshold_bsc() {
        let (_, info) = bsc_info();
        let c = info.capacity.unwrap();
        let t = theory_threshold(&info, c, Regime::Case1, 1000.0, 0.1, 0.0).unwrap();
        assert!((t - 477.574_191_576_927).abs() < 1e-6, "{t}");
        let q = t / info.b;
        assert!(matches!(
            theory_threshold(&info, c, Regime::Case1, 1000.0, 0.1, q),
            Err(SchemeError::ThresholdDegenerate(_))
        ));
        let mut prev = f64::INFINITY;
        for rho in [0.1, 0.01, 1e-4, 1e-8] {
            let t = theory_threshold(&info, c, Regime::Case1, 1000.0, rho, -1.0).unwrap();
            assert!(t < prev);
            prev = t;
        }
        assert!((prev - info.b).abs() < 1e-4);
    }

    #[test]
    fn design_length_solves_quadratic() {
        for n in [10.0, 100.0, 1234.5, 1e6] {
            let l = design_length(n);
            assert!((l + 3.0 * l.sqrt() - n).abs() < 1e-9 * n);
        }
        assert!((design_length(130.0) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn case2_schedule() {
        let (dmc, info) = bsc_info();
        let opts = SchemeOptions {
            regime: Some(Regime::Case2),
            ..Default::default()
        };
        let p = SchemeParams::configure(&dmc, &info, 16, 130.0, 0.3, opts).unwrap();
        assert!((p.design_length.unwrap() - 100.0).abs() < 1e-9);
        assert!((p.p0 - 0.99).abs() < 1e-12);
        assert!((p.z0 - 99f64.ln()).abs() < 1e-12);
        assert!((p.abort.unwrap() - 2.297_56).abs() < 1e-5);
        let c = info.capacity.unwrap();
        let rp = 0.3 - 0.3 * (c - 0.3);
        assert!((p.rho_prime.unwrap() - rp).abs() < 1e-12);
        let coeff = 1.0 / c - 0.99 / info.b + 0.03 / (2.0 * info.b_star);
        let expected = info.b / 0.99 * (100.0 * rp / c - coeff * 99f64.ln());
        assert!((p.log_eps - expected).abs() < 1e-9);
    }

    #[test]
    fn case1_configuration() {
        let (dmc, info) = bsc_info();
        let p = SchemeParams::configure(&dmc, &info, 16, 1000.0, 0.1, SchemeOptions::default()).unwrap();
        assert_eq!(p.regime, Regime::Case1);
        assert!((p.p0 - 0.5).abs() < 1e-9);
        assert!(p.z0.abs() < 1e-8);
        assert_eq!(p.n_max, 50_000);
        assert!(p.abort.is_none());
        let degenerate = p.with_log_eps(p.z0);
        assert!(degenerate.validate().is_ok());
        assert!(p.with_log_eps(p.z0 - 1.0).validate().is_err());
    }

    #[test]
    fn asymmetric_channel_has_no_p0() {
        let dmc = Dmc::new(vec![vec![0.95, 0.05], vec![0.2, 0.8]]).unwrap();
        let r = capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let info = compute_info(&dmc).with_capacity(r.capacity, r.px_star);
        let err = SchemeParams::configure(&dmc, &info, 16, 200.0, 0.2, SchemeOptions::default()).unwrap_err();
        assert!(matches!(err, SchemeError::NoP0Solution { .. }), "{err:?}");
        let opts = SchemeOptions {
            p0: Some(0.6),
            ..Default::default()
        };
        let p = SchemeParams::configure(&dmc, &info, 16, 200.0, 0.2, opts).unwrap();
        assert_eq!(p.p0, 0.6);
    }

    #[test]
    fn missing_capacity_is_reported() {
        let dmc = Dmc::bsc(0.1).unwrap();
        let info = compute_info(&dmc);
        assert_eq!(
            SchemeParams::configure(&dmc, &info, 4, 10.0, 0.1, SchemeOptions::default()),
            Err(SchemeError::MissingCapacity)
        );
    }
}
