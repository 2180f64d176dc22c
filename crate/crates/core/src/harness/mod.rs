//! Campaign orchestration: configuration, parallel Monte Carlo, estimation
//! and result files.

mod campaign;
mod config;
mod drift_audit;
mod estimate;
mod output;

pub use campaign::{prepare_channel, run_campaign, run_campaign_on, Campaign, PreparedChannel, SkipReason, SkippedPoint};
pub use config::{CampaignConfig, OutputFormat, RhoFamily, DEFAULT_MAX_MESSAGES, DEFAULT_TOL_REL, MIN_TRIALS};
pub use drift_audit::{drift_audit, DriftAuditOptions, DriftAuditReport};
pub use estimate::{estimate_pe, md_curve, McSummary, MdCurve, MdRow, PeEstimate};
pub use output::{read_csv, write_csv, write_jsonl, write_summaries};

use thiserror::Error;

use crate::capacity::CapacityError;
use crate::channel::ChannelError;
use crate::scheme::SchemeError;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "VLF_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Worker count: explicit flag, then `VLF_THREADS`, then rayon's default.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, HarnessError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::Config(format!("{THREADS_ENV}='{v}' is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Run `f` on a dedicated pool of `threads` workers (rayon's default when `None`).
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
