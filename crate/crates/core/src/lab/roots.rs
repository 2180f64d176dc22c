use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RootsError {
    #[error("B and C must be positive, got B = {b}, C = {c}")]
    Invalid { b: f64, c: f64 },
    #[error("b = {b} is below the critical value {critical}; no two roots")]
    NoTwoRoots { b: f64, critical: f64 },
}

/// Both positive roots of `x/C = ln(x)/B + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverseRoots {
    pub a: f64,
    pub big_a: f64,
    /// Logs of the roots; `a` itself underflows once `b·B` exceeds ~700.
    pub ln_a: f64,
    pub ln_big_a: f64,
    pub ratio: f64,
    pub residual: f64,
}

/// `b` at which the two roots merge at `x = C/B`.
pub fn critical_b(b_div: f64, c: f64) -> f64 {
    (1.0 - (c / b_div).ln()) / b_div
}

pub fn converse_roots(b_div: f64, c: f64, b: f64) -> Result<ConverseRoots, RootsError> {
    if !(b_div > 0.0 && c > 0.0 && b_div.is_finite() && c.is_finite()) {
        return Err(RootsError::Invalid { b: b_div, c });
    }
    // In s = ln x: g(s) = eˢ/C − s/B − b, convex with minimum at ln(C/B).
    let g = |s: f64| s.exp() / c - s / b_div - b;
    let s_min = (c / b_div).ln();
    let critical = critical_b(b_div, c);
    let g_min = g(s_min);
    if g_min > 1e-12 {
        return Err(RootsError::NoTwoRoots { b, critical });
    }
    if g_min.abs() <= 1e-12 {
        let x = c / b_div;
        return Ok(ConverseRoots {
            a: x,
            big_a: x,
            ln_a: s_min,
            ln_big_a: s_min,
            ratio: 1.0,
            residual: g_min.abs(),
        });
    }
    // g(s) ≥ −s/B − b, positive once s < −bB.
    let mut lo = s_min.min(-b * b_div) - 1.0;
    while g(lo) <= 0.0 {
        lo -= lo.abs().max(1.0);
    }
    let mut hi = s_min + 1.0;
    while g(hi) <= 0.0 {
        hi += hi.abs().max(1.0);
    }
    let ln_a = bisect(&g, lo, s_min);
    let ln_big_a = bisect(&g, s_min, hi);
    Ok(ConverseRoots {
        a: ln_a.exp(),
        big_a: ln_big_a.exp(),
        ln_a,
        ln_big_a,
        ratio: (ln_big_a - ln_a).exp(),
        residual: g(ln_a).abs().max(g(ln_big_a).abs()),
    })
}

/// Root of `g` on `[lo, hi]` where `g` changes sign, to full precision.
fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g_lo_positive = g(lo) > 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (g(mid) > 0.0) == g_lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}
