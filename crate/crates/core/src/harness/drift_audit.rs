//! Exact one-step drift checks on posteriors visited by simulated trials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::campaign::prepare_channel;
use super::HarnessError;
use crate::channel::Dmc;
use crate::posterior::{
    exact_entropy_drift, exact_log_entropy_drift, exact_z_drift, EncoderMap, ObservationLaw, PosteriorState,
};
use crate::rng::trial_seed;
use crate::scheme::{phase1_z_drift, Phase, Regime, Scheme, SchemeOptions, SchemeParams, StepContext, TrialObserver};

/// Absolute slack on every inequality.
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftAuditOptions {
    pub messages: usize,
    pub n_target: f64,
    pub rho: f64,
    pub log_eps: f64,
    pub max_states: usize,
    pub seed: u64,
    pub regime: Option<Regime>,
    pub p0: Option<f64>,
}

impl Default for DriftAuditOptions {
    fn default() -> Self {
        Self {
            messages: 8,
            n_target: 60.0,
            rho: 60f64.powf(-1.0 / 3.0),
            log_eps: 12.0,
            max_states: 10_000,
            seed: 0,
            regime: None,
            p0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftAuditReport {
    pub regime: Regime,
    pub p0: f64,
    pub capacity: f64,
    pub b: f64,
    pub b_star: f64,
    pub c2: f64,
    pub states: usize,
    pub phase1_states: usize,
    pub phase2_states: usize,
    /// Largest `E[H_n − H_{n+1}]`; must stay below `C`.
    pub max_entropy_drift: f64,
    /// Largest `E[ln H_n − ln H_{n+1}]`; must stay below `B`.
    pub max_log_entropy_drift: f64,
    /// Smallest partition-averaged phase-1 drift of `Z_w`; must reach `C`.
    pub min_phase1_z_drift: Option<f64>,
    /// Largest `|E[ΔZ_j0] − B|` with outputs from `j0`.
    pub max_phase2_lead_error: f64,
    /// Largest `|E[ΔZ_j0] + B*|` with outputs from a message other than `j0`.
    pub max_phase2_other_error: f64,
    /// Largest `|Z_j(n+1) − Z_j(n)|` over all outputs and finite `j`; must stay below `C2`.
    pub max_step: f64,
    pub violations: Vec<String>,
}

impl DriftAuditReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Visit {
    w_true: usize,
    phase: Phase,
    j0: Option<usize>,
    state: PosteriorState,
    map: Vec<usize>,
}

struct Collector {
    visits: Vec<Visit>,
    cap: usize,
}

impl TrialObserver for Collector {
    fn before_step(&mut self, ctx: &StepContext<'_>) {
        if self.visits.len() < self.cap {
            self.visits.push(Visit {
                w_true: ctx.w_true,
                phase: ctx.phase,
                j0: ctx.j0,
                state: ctx.state.clone(),
                map: ctx.map.to_vec(),
            });
        }
    }
}

#[derive(Default)]
struct Measure {
    entropy: f64,
    log_entropy: f64,
    phase1: Option<f64>,
    lead: f64,
    other: f64,
    step: f64,
    errors: Vec<String>,
}

/// Simulate trials until `max_states` pre-step posteriors are collected and
/// evaluate every drift identity exactly at each one.
pub fn drift_audit(dmc: &Dmc, options: &DriftAuditOptions) -> Result<DriftAuditReport, HarnessError> {
    if options.max_states == 0 {
        return Err(HarnessError::Config("drift audit needs at least one state".into()));
    }
    let ch = prepare_channel(dmc)?;
    let (dmc, info, c) = (&ch.dmc, &ch.info, ch.capacity);
    let scheme_options = SchemeOptions {
        regime: options.regime,
        p0: options.p0,
        ..Default::default()
    };
    let params = SchemeParams::configure(dmc, info, options.messages, options.n_target, options.rho, scheme_options)?
        .with_log_eps(options.log_eps);
    let scheme = Scheme::new(dmc, info, params)?;
    let px = info.px_star.clone().expect("prepared channel has a capacity law");

    let mut collector = Collector {
        visits: Vec::with_capacity(options.max_states),
        cap: options.max_states,
    };
    let mut trial = 0u64;
    while collector.visits.len() < options.max_states {
        let w = (trial as usize) % options.messages;
        scheme.run_trial_observed(w, trial_seed(options.seed, trial), &mut collector);
        trial += 1;
    }

    let measures: Vec<Measure> = collector
        .visits
        .par_iter()
        .map(|v| measure(v, dmc, &px, info.b, info.b_star))
        .collect();

    let mut report = DriftAuditReport {
        regime: scheme.params().regime,
        p0: scheme.params().p0,
        capacity: c,
        b: info.b,
        b_star: info.b_star,
        c2: info.c2,
        states: collector.visits.len(),
        phase1_states: collector.visits.iter().filter(|v| v.phase == Phase::One).count(),
        phase2_states: collector.visits.iter().filter(|v| v.phase == Phase::Two).count(),
        max_entropy_drift: f64::NEG_INFINITY,
        max_log_entropy_drift: f64::NEG_INFINITY,
        min_phase1_z_drift: None,
        max_phase2_lead_error: 0.0,
        max_phase2_other_error: 0.0,
        max_step: 0.0,
        violations: Vec::new(),
    };
    for m in measures {
        report.max_entropy_drift = report.max_entropy_drift.max(m.entropy);
        report.max_log_entropy_drift = report.max_log_entropy_drift.max(m.log_entropy);
        if let Some(d) = m.phase1 {
            report.min_phase1_z_drift = Some(report.min_phase1_z_drift.map_or(d, |x| x.min(d)));
        }
        report.max_phase2_lead_error = report.max_phase2_lead_error.max(m.lead);
        report.max_phase2_other_error = report.max_phase2_other_error.max(m.other);
        report.max_step = report.max_step.max(m.step);
        report.violations.extend(m.errors);
    }
    let mut flag = |ok: bool, msg: String| {
        if !ok {
            report.violations.push(msg);
        }
    };
    flag(report.max_entropy_drift <= c + SLACK, format!("entropy drift {} > C = {c}", report.max_entropy_drift));
    flag(
        report.max_log_entropy_drift <= info.b + SLACK,
        format!("log-entropy drift {} > B = {}", report.max_log_entropy_drift, info.b),
    );
    if let Some(d) = report.min_phase1_z_drift {
        flag(d >= c - SLACK, format!("phase-1 Z drift {d} < C = {c}"));
    }
    flag(report.max_phase2_lead_error <= SLACK, format!("phase-2 lead drift off B by {}", report.max_phase2_lead_error));
    flag(
        report.max_phase2_other_error <= SLACK,
        format!("phase-2 drift off -B* by {}", report.max_phase2_other_error),
    );
    flag(report.max_step <= info.c2 + SLACK, format!("step {} > C2 = {}", report.max_step, info.c2));
    Ok(report)
}

fn record<E: std::fmt::Display>(r: Result<f64, E>, what: &str, n: usize, errors: &mut Vec<String>) -> Option<f64> {
    r.map_err(|e| errors.push(format!("{what} at n = {n}: {e}"))).ok()
}

fn measure(v: &Visit, dmc: &Dmc, px: &[f64], b: f64, b_star: f64) -> Measure {
    let mut m = Measure::default();
    let n = v.state.time();
    let enc = EncoderMap::new(v.map.clone());
    m.entropy = record(exact_entropy_drift(&v.state, &enc, dmc), "entropy drift", n, &mut m.errors)
        .unwrap_or(f64::NEG_INFINITY);
    if v.state.entropy() > 0.0 {
        m.log_entropy = record(exact_log_entropy_drift(&v.state, &enc, dmc), "log-entropy drift", n, &mut m.errors)
            .unwrap_or(f64::NEG_INFINITY);
    } else {
        m.log_entropy = f64::NEG_INFINITY;
    }
    match (v.phase, v.j0) {
        (Phase::One, _) if v.state.log_odds(v.w_true).is_finite() => {
            m.phase1 = record(phase1_z_drift(&v.state, px, dmc, v.w_true), "phase-1 drift", n, &mut m.errors);
        }
        (Phase::Two, Some(j0)) if v.state.log_odds(j0).is_finite() => {
            let lead = exact_z_drift(&v.state, &enc, dmc, j0, ObservationLaw::Message(j0));
            if let Some(d) = record(lead, "lead drift", n, &mut m.errors) {
                m.lead = (d - b).abs();
            }
            let w = (j0 + 1) % v.state.messages();
            let other = exact_z_drift(&v.state, &enc, dmc, j0, ObservationLaw::Message(w));
            if let Some(d) = record(other, "other drift", n, &mut m.errors) {
                m.other = (d + b_star).abs();
            }
        }
        _ => {}
    }
    let before = v.state.log_odds_all();
    for y in 0..dmc.output_size() {
        let Ok(next) = v.state.bayes_update(&enc, dmc, y) else { continue };
        for (z0, z1) in before.iter().zip(next.log_odds_all()) {
            if z0.is_finite() && z1.is_finite() {
                m.step = m.step.max((z1 - z0).abs());
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DriftAuditOptions {
        DriftAuditOptions {
            max_states: 1500,
            ..Default::default()
        }
    }

    #[test]
    fn bsc_case1_passes() {
        let r = drift_audit(&Dmc::bsc(0.1).unwrap(), &small()).unwrap();
        assert!(r.pass(), "{:?}", r.violations);
        assert_eq!(r.regime, Regime::Case1);
        assert!(r.phase1_states > 0 && r.phase2_states > 0);
        assert!(r.min_phase1_z_drift.is_some());
    }

    #[test]
    fn bsc_case2_passes() {
        let opts = DriftAuditOptions {
            regime: Some(Regime::Case2),
            ..small()
        };
        let r = drift_audit(&Dmc::bsc(0.1).unwrap(), &opts).unwrap();
        assert!(r.pass(), "{:?}", r.violations);
        assert_eq!(r.regime, Regime::Case2);
    }

    #[test]
    fn step_bound_is_nearly_tight_on_bsc() {
        let r = drift_audit(&Dmc::bsc(0.1).unwrap(), &small()).unwrap();
        // Phase 2 moves Z_j0 by exactly ±ln 9.
        assert!((r.max_step - r.c2).abs() < 1e-9, "{} vs {}", r.max_step, r.c2);
    }
}
