use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelInfo;

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("B is infinite")]
    InfiniteB,
    #[error("design length L = {0} must be at least 10")]
    TooShort(f64),
    #[error("capacity and backoff must be positive, got C = {0}, rho' = {1}")]
    Invalid(f64, f64),
}

/// Case-2 schedule at design length `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeAudit {
    pub l: f64,
    pub rho_prime: f64,
    pub p0l: f64,
    pub z0l: f64,
    pub al: f64,
    /// `−ln εₗ`; `εₗ` itself underflows for large `L`.
    pub log_eps_l: f64,
    pub eps_l: f64,
    /// Upper end of the admissible `p₁,ₗ` interval, when it is nonempty.
    pub p1l_bound: Option<f64>,
    /// `E(Wₗ)` with `p₁,ₗ` at its bound.
    pub ewl: Option<f64>,
    pub ewl_bound: f64,
    /// `−ln εₗ / (L·ρ′ₗ)`.
    pub ratio: f64,
    pub b_over_c: f64,
    /// `L` is too small for the schedule to be admissible; not a failure.
    pub below_threshold: bool,
}

impl SchemeAudit {
    /// `E(Wₗ) ≤ L + 3√L`, when the schedule is admissible.
    pub fn holds(&self) -> Option<bool> {
        self.ewl.map(|e| e <= self.ewl_bound)
    }
}

/// `ln(eˣ − 1)` for `x > 0`.
fn ln_expm1(x: f64) -> f64 {
    x + (-(-x).exp()).ln_1p()
}

pub fn audit_schedule(
    info: &ChannelInfo,
    capacity: f64,
    l: f64,
    rho_prime: f64,
    const_q: f64,
) -> Result<SchemeAudit, AuditError> {
    if !info.finite_b {
        return Err(AuditError::InfiniteB);
    }
    if !(l >= 10.0) {
        return Err(AuditError::TooShort(l));
    }
    if !(capacity > 0.0 && rho_prime > 0.0) {
        return Err(AuditError::Invalid(capacity, rho_prime));
    }
    let (b, b_star, c) = (info.b, info.b_star, capacity);
    let p0 = 1.0 - 1.0 / l;
    let z0 = (l - 1.0).ln();
    let a = z0 / 2.0;
    let coeff = 1.0 / c - p0 / b + 3.0 * (1.0 - p0) / (2.0 * b_star);
    let log_eps = b / p0 * (l * rho_prime / c - coeff * z0 - const_q);
    let eps = (-log_eps).exp();

    let tail = eps * (-info.c2).exp();
    let num = (-z0).exp() - tail;
    let den = (-a).exp() - tail;
    let p1 = (log_eps > 0.0 && num >= 0.0 && den > 0.0 && num <= den).then(|| num / den);

    let exponent = l * (c - rho_prime);
    let ewl = match p1 {
        Some(p1) if exponent > 0.0 => {
            let rhs = p0 * log_eps / b
                + ln_expm1(exponent) / c
                + (1.0 / c - p0 / b + (1.0 - p0) / b_star) * z0
                + (1.0 - p0) * a.abs() / b_star
                + const_q;
            Some(rhs / (p0 * (1.0 - p1)))
        }
        _ => None,
    };
    Ok(SchemeAudit {
        l,
        rho_prime,
        p0l: p0,
        z0l: z0,
        al: a,
        log_eps_l: log_eps,
        eps_l: eps,
        p1l_bound: p1,
        ewl,
        ewl_bound: l + 3.0 * l.sqrt(),
        ratio: log_eps / (l * rho_prime),
        b_over_c: b / c,
        below_threshold: ewl.is_none(),
    })
}
