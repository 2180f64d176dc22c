use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::lab::fano_check;
use crate::scheme::{Mode, Regime, SchemeParams, TrialOutcome};
use crate::stats::{log_mean, mean_ci, wilson};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeEstimate {
    pub pe_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Error-rate point estimate with a Wilson interval; with no errors the
/// upper end is the rule-of-three bound `3/trials`.
pub fn estimate_pe(errors: u64, trials: u64) -> PeEstimate {
    assert!(trials >= 1 && errors <= trials);
    let pe_hat = errors as f64 / trials as f64;
    if errors == 0 {
        return PeEstimate {
            pe_hat,
            lower: 0.0,
            upper: (3.0 / trials as f64).min(1.0),
        };
    }
    let ci = wilson(errors, trials);
    PeEstimate {
        pe_hat,
        lower: ci.lower,
        upper: ci.upper,
    }
}

/// One row of campaign output. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n: f64,
    pub rho: f64,
    pub messages: u64,
    /// `ln M / N`.
    pub rate: f64,
    /// `C − ln M / N`: the backoff actually realized.
    pub rho_eff: f64,
    pub regime: Regime,
    pub mode: Mode,
    pub log_eps: f64,
    pub p0: f64,
    pub trials: u64,
    pub completed: u64,
    pub aborts: u64,
    pub errors: u64,
    pub pe_hat: f64,
    pub pe_lower: f64,
    pub pe_upper: f64,
    /// `−ln(pe_hat)/(N·rho_eff)`; empty without errors.
    pub md_ratio: Option<f64>,
    /// `−ln(pe_upper)/(N·rho_eff)`, a one-sided lower bound.
    pub md_ratio_lower_bound: f64,
    /// Natural log of the mean conditional error probability at decisions.
    pub log_pe_cond: f64,
    pub log_pe_cond_lower: f64,
    pub log_pe_cond_upper: f64,
    /// `−log_pe_cond/(N·rho_eff)` with its 95% interval.
    pub md_ratio_cond: f64,
    pub md_ratio_cond_lower: f64,
    pub md_ratio_cond_upper: f64,
    pub mean_tau: f64,
    pub tau_ci: f64,
    pub mean_attempts: f64,
    pub retransmit_rate: f64,
    /// Case 2: share of attempts entering phase 2 with the true message.
    pub p0_hat: f64,
    /// Case 2: share of those attempts that aborted.
    pub p1_hat: f64,
    pub mean_entropy: f64,
    pub entropy_ci: f64,
    pub fano_pass: bool,
    /// Calibrated mode: `|mean_tau − N| ≤ 0.02·N` and the interval covers `N`.
    pub tau_on_target: bool,
    /// Theory mode: `mean_tau > N`.
    pub tau_exceeds_n: bool,
    pub calibration_converged: bool,
    /// Backoff family outside the strict `ρ√N → ∞` regime.
    pub relaxed_rho: bool,
    pub b_over_c: f64,
    pub config_hash: String,
    pub seed: u64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

pub(crate) struct PointContext<'a> {
    pub params: &'a SchemeParams,
    pub capacity: f64,
    pub b_over_c: f64,
    pub converged: bool,
    pub relaxed_rho: bool,
    pub config_hash: &'a str,
    pub seed: u64,
}

pub(crate) fn summarize(outcomes: &[TrialOutcome], ctx: &PointContext<'_>) -> McSummary {
    let p = ctx.params;
    let n = p.n_target;
    let done: Vec<&TrialOutcome> = outcomes.iter().filter(|o| !o.aborted).collect();
    let completed = done.len() as u64;
    let errors = done.iter().filter(|o| o.error).count() as u64;
    let rate = (p.messages as f64).ln() / n;
    let rho_eff = ctx.capacity - rate;
    let scale = n * rho_eff;
    let pe = if completed > 0 {
        estimate_pe(errors, completed)
    } else {
        PeEstimate {
            pe_hat: f64::NAN,
            lower: 0.0,
            upper: 1.0,
        }
    };
    let logs: Vec<f64> = done.iter().map(|o| o.log_cond_error).collect();
    let cond = log_mean(&logs);
    let tau = mean_ci(done.iter().map(|o| o.tau_total as f64));
    let entropy = mean_ci(done.iter().map(|o| o.final_entropy));
    let attempts: u64 = done.iter().map(|o| o.attempts as u64).sum();
    let retransmits: u64 = done.iter().map(|o| o.retransmits as u64).sum();
    let h0: u64 = done.iter().map(|o| o.h0_attempts as u64).sum();
    let h0_retx: u64 = done.iter().map(|o| o.h0_retransmits as u64).sum();
    let ratio = |x: u64, y: u64| if y > 0 { x as f64 / y as f64 } else { f64::NAN };
    let fano = fano_check(
        entropy.mean,
        if entropy.half_width.is_finite() { entropy.half_width } else { 0.0 },
        pe.pe_hat,
        pe.upper,
        p.messages,
    );
    let on_target = (tau.mean - n).abs() <= 0.02 * n && tau.interval().contains(n);
    McSummary {
        n,
        rho: p.rho,
        messages: p.messages as u64,
        rate,
        rho_eff,
        regime: p.regime,
        mode: p.mode,
        log_eps: p.log_eps,
        p0: p.p0,
        trials: outcomes.len() as u64,
        completed,
        aborts: outcomes.len() as u64 - completed,
        errors,
        pe_hat: pe.pe_hat,
        pe_lower: pe.lower,
        pe_upper: pe.upper,
        md_ratio: (errors > 0).then(|| -pe.pe_hat.ln() / scale),
        md_ratio_lower_bound: -pe.upper.ln() / scale,
        log_pe_cond: cond.log_mean,
        log_pe_cond_lower: cond.log_lower,
        log_pe_cond_upper: cond.log_upper,
        md_ratio_cond: -cond.log_mean / scale,
        md_ratio_cond_lower: -cond.log_upper / scale,
        md_ratio_cond_upper: -cond.log_lower / scale,
        mean_tau: tau.mean,
        tau_ci: tau.half_width,
        mean_attempts: ratio(attempts, completed),
        retransmit_rate: ratio(retransmits, attempts),
        p0_hat: ratio(h0, attempts),
        p1_hat: ratio(h0_retx, h0),
        mean_entropy: entropy.mean,
        entropy_ci: entropy.half_width,
        fano_pass: fano.pass,
        tau_on_target: p.mode == Mode::Calibrated && on_target,
        tau_exceeds_n: p.mode == Mode::Theory && tau.mean > n,
        calibration_converged: ctx.converged,
        relaxed_rho: ctx.relaxed_rho,
        b_over_c: ctx.b_over_c,
        config_hash: ctx.config_hash.to_string(),
        seed: ctx.seed,
        wall_seconds: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdRow {
    pub n: f64,
    pub rho: f64,
    pub rho_eff: f64,
    pub md_ratio: Option<f64>,
    pub md_ratio_lower_bound: f64,
    pub md_ratio_cond: f64,
    pub md_ratio_cond_lower: f64,
    pub md_ratio_cond_upper: f64,
    /// The limit `B/C`.
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdCurve {
    pub rows: Vec<MdRow>,
    /// No point had an observed error, so `md_ratio` is empty everywhere and
    /// only the rule-of-three lower bounds are available.
    pub lower_bounds_only: bool,
}

impl MdCurve {
    /// `md_ratio_cond` never drops by more than the two points' combined
    /// interval half-widths as `N` grows.
    pub fn cond_nondecreasing(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let half = |r: &MdRow| 0.5 * (r.md_ratio_cond_upper - r.md_ratio_cond_lower);
            w[1].md_ratio_cond >= w[0].md_ratio_cond - (half(&w[0]) + half(&w[1]))
        })
    }
}

/// Rows sorted by `N`, ready for plotting against the `B/C` line.
pub fn md_curve(summaries: &[McSummary]) -> Result<MdCurve, HarnessError> {
    if summaries.is_empty() {
        return Err(HarnessError::Config("md curve needs at least one summary".into()));
    }
    let mut rows: Vec<MdRow> = summaries
        .iter()
        .map(|s| MdRow {
            n: s.n,
            rho: s.rho,
            rho_eff: s.rho_eff,
            md_ratio: s.md_ratio,
            md_ratio_lower_bound: s.md_ratio_lower_bound,
            md_ratio_cond: s.md_ratio_cond,
            md_ratio_cond_lower: s.md_ratio_cond_lower,
            md_ratio_cond_upper: s.md_ratio_cond_upper,
            reference: s.b_over_c,
        })
        .collect();
    rows.sort_by(|a, b| a.n.total_cmp(&b.n));
    let lower_bounds_only = rows.iter().all(|r| r.md_ratio.is_none());
    Ok(MdCurve { rows, lower_bounds_only })
}
