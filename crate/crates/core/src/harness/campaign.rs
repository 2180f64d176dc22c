use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::CampaignConfig;
use super::estimate::{summarize, McSummary, PointContext};
use super::{resolve_threads, with_pool, HarnessError};
use crate::capacity::{capacity, restrict_to_support, DEFAULT_MAX_ITER, DEFAULT_TOL, SUPPORT_THRESHOLD};
use crate::channel::{compute_info, ChannelInfo, Dmc};
use crate::rng::trial_seed;
use crate::scheme::{calibrate_threshold, run_trials, Mode, Regime, Scheme, SchemeOptions, SchemeParams};

/// Channel reduced to the capacity-achieving support, with its quantities.
#[derive(Debug, Clone)]
pub struct PreparedChannel {
    pub dmc: Dmc,
    pub info: ChannelInfo,
    pub capacity: f64,
    /// Original input indices kept.
    pub kept: Vec<usize>,
    /// Inputs had to be dropped to obtain full support.
    pub patched: bool,
}

pub fn prepare_channel(dmc: &Dmc) -> Result<PreparedChannel, HarnessError> {
    dmc.ensure_codable()?;
    let full = capacity(dmc, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let r = restrict_to_support(dmc, &full, SUPPORT_THRESHOLD)?;
    let info = compute_info(&r.dmc).with_capacity(r.capacity.capacity, r.capacity.px_star.clone());
    Ok(PreparedChannel {
        capacity: r.capacity.capacity,
        dmc: r.dmc,
        info,
        kept: r.kept,
        patched: r.patched,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SkipReason {
    /// `N·(C − ρ_N) < ln 2`.
    TooFewMessages { log_m: f64 },
    /// `O(M)` posterior state is infeasible; use a fixed small `M`.
    MessageSpaceTooLarge { log_m: f64, limit: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub n: f64,
    pub reason: SkipReason,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub channel: PreparedChannel,
    pub points: Vec<McSummary>,
    pub skipped: Vec<SkippedPoint>,
    pub config_hash: String,
}

impl Campaign {
    pub fn regime(&self) -> Regime {
        Regime::for_channel(self.channel.info.b_star, self.channel.capacity)
    }
}

pub fn run_campaign(cfg: &CampaignConfig) -> Result<Campaign, HarnessError> {
    cfg.validate()?;
    let dmc = Dmc::load(&cfg.channel_path)?;
    run_campaign_on(&dmc, cfg)
}

/// As [`run_campaign`] with the channel supplied directly; `channel_path`
/// only enters the config hash.
pub fn run_campaign_on(dmc: &Dmc, cfg: &CampaignConfig) -> Result<Campaign, HarnessError> {
    cfg.validate()?;
    let threads = resolve_threads(cfg.threads)?;
    let channel = prepare_channel(dmc)?;
    let hash = cfg.hash();
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &n in &cfg.n_grid {
        let rho = cfg.rho_family.at(n);
        let messages = match cfg.messages {
            Some(m) => m,
            None => {
                let log_m = n * (channel.capacity - rho);
                let m = log_m.exp().round();
                if !(m >= 2.0) {
                    skipped.push(SkippedPoint {
                        n,
                        reason: SkipReason::TooFewMessages { log_m },
                    });
                    continue;
                }
                if m > cfg.max_messages as f64 {
                    skipped.push(SkippedPoint {
                        n,
                        reason: SkipReason::MessageSpaceTooLarge {
                            log_m,
                            limit: cfg.max_messages,
                        },
                    });
                    continue;
                }
                m as usize
            }
        };
        let start = Instant::now();
        let mut summary = with_pool(threads, || run_point(&channel, cfg, &hash, n, rho, messages))??;
        summary.wall_seconds = start.elapsed().as_secs_f64();
        points.push(summary);
    }
    Ok(Campaign {
        channel,
        points,
        skipped,
        config_hash: hash,
    })
}

fn run_point(
    channel: &PreparedChannel,
    cfg: &CampaignConfig,
    hash: &str,
    n: f64,
    rho: f64,
    messages: usize,
) -> Result<McSummary, HarnessError> {
    let options = SchemeOptions {
        regime: cfg.regime,
        mode: cfg.mode,
        const_q: cfg.const_q,
        p0: cfg.p0,
        n_max_factor: cfg.n_max_factor,
    };
    let params = SchemeParams::configure(&channel.dmc, &channel.info, messages, n, rho, options)?;
    let scheme = Scheme::new(&channel.dmc, &channel.info, params)?;
    // Keyed by N so a point reproduces whether run alone or in a sweep.
    let seed = trial_seed(cfg.seed, n.to_bits());
    let (scheme, outcomes, converged) = match cfg.mode {
        Mode::Theory => {
            let outcomes = run_trials(&scheme, cfg.trials, seed);
            (scheme, outcomes, true)
        }
        Mode::Calibrated => {
            let cal = calibrate_threshold(&scheme, n, cfg.trials.max(crate::scheme::MIN_CALIBRATION_TRIALS), cfg.tol_rel, seed)?;
            (scheme.with_log_eps(cal.log_eps), cal.outcomes, cal.converged)
        }
    };
    let ctx = PointContext {
        params: scheme.params(),
        capacity: channel.capacity,
        b_over_c: channel.info.b / channel.capacity,
        converged,
        relaxed_rho: cfg.rho_family.relaxed(),
        config_hash: hash,
        seed: cfg.seed,
    };
    Ok(summarize(&outcomes, &ctx))
}
