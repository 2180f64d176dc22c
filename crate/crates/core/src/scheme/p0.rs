//! Phase-1 threshold `p0` for Case 1.
//!
//! `ψ(u, v) = Σ_y P(y|x0′) ln[P(y|x0′)(1 − v) / (P(y|x0′)(1 − v) + u(P(y|x0) − P(y|x0′)))]`
//! and `p0` is the least `u ∈ [1/2, 1]` for which `ψ(u, v) = C` has a root
//! with `0 ≤ v ≤ min(1 − u, 1/2)`. Note `ψ(1, 0) = D(P(·|x0′) ‖ P(·|x0)) = B*`
//! and `ψ(1/2, 0) = D(P(·|x0′) ‖ (P(·|x0) + P(·|x0′))/2)`.

use serde::{Deserialize, Serialize};

use super::SchemeError;
use crate::channel::{ChannelInfo, Dmc};
use crate::posterior::{exact_z_drift, EncoderMap, ObservationLaw, PosteriorState};

const GRID_STEP: f64 = 1e-4;
const RESIDUAL: f64 = 1e-9;
/// Sign tolerance when testing for a root on the `v` interval.
const SIGN_SLACK: f64 = 1e-12;
/// Cap on `|X|^M` for the exact partition average.
pub const MAX_PARTITIONS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P0Solution {
    pub p0: f64,
    /// A `v` with `ψ(p0, v) = C`.
    pub v: f64,
    pub residual: f64,
}

pub fn psi(dmc: &Dmc, info: &ChannelInfo, u: f64, v: f64) -> f64 {
    psi_rows(dmc.row(info.x0), dmc.row(info.x0_prime), u, v)
}

fn psi_rows(p: &[f64], p_prime: &[f64], u: f64, v: f64) -> f64 {
    p.iter()
        .zip(p_prime)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&p, &q)| {
            let num = q * (1.0 - v);
            q * (num / (num + u * (p - q))).ln()
        })
        .sum()
}

pub fn solve_p0(dmc: &Dmc, info: &ChannelInfo, capacity: f64) -> Result<P0Solution, SchemeError> {
    if !info.finite_b {
        return Err(SchemeError::InfiniteB);
    }
    if info.b_star <= capacity {
        return Err(SchemeError::WrongRegime {
            b_star: info.b_star,
            capacity,
        });
    }
    let (p, q) = (dmc.row(info.x0), dmc.row(info.x0_prime));
    let f = |u: f64, v: f64| psi_rows(p, q, u, v) - capacity;
    let v_max = |u: f64| (1.0 - u).min(0.5);
    let has_root = |u: f64| f(u, 0.0) <= SIGN_SLACK && f(u, v_max(u)) >= -SIGN_SLACK;

    let steps = (0.5 / GRID_STEP).round() as usize;
    let first = (0..=steps)
        .map(|k| 0.5 + k as f64 * GRID_STEP)
        .position(has_root)
        .ok_or(SchemeError::NoP0Solution {
            psi_half: psi_rows(p, q, 0.5, 0.0),
            capacity,
        })?;
    let mut u = 0.5 + first as f64 * GRID_STEP;
    if first > 0 {
        let mut lo = u - GRID_STEP;
        for _ in 0..100 {
            let mid = 0.5 * (lo + u);
            if has_root(mid) {
                u = mid;
            } else {
                lo = mid;
            }
            if u - lo < 1e-15 {
                break;
            }
        }
    }

    let (mut lo, mut hi) = (0.0, v_max(u));
    let mut v = if f(u, lo).abs() < RESIDUAL { lo } else { hi };
    if f(u, v).abs() >= RESIDUAL {
        for _ in 0..200 {
            v = 0.5 * (lo + hi);
            let r = f(u, v);
            if r.abs() < RESIDUAL {
                break;
            }
            if r < 0.0 {
                lo = v;
            } else {
                hi = v;
            }
        }
    }
    Ok(P0Solution {
        p0: u,
        v,
        residual: f(u, v),
    })
}

/// Exact `E[Z_w(n+1) − Z_w(n)]` with outputs from message `w`, averaged
/// over the random phase-1 partition drawn from `px_star`.
///
/// The bound `≥ C` below `p0` holds for this average; a single realized
/// partition can fall short of it.
pub fn phase1_z_drift(
    state: &PosteriorState,
    px_star: &[f64],
    dmc: &Dmc,
    w: usize,
) -> Result<f64, SchemeError> {
    let support: Vec<usize> = (0..px_star.len()).filter(|&x| px_star[x] > 0.0).collect();
    let m = state.messages();
    let count = (support.len() as f64).powi(m as i32);
    if count > MAX_PARTITIONS as f64 {
        return Err(SchemeError::InvalidParams(format!(
            "{count} partitions exceed the enumeration cap {MAX_PARTITIONS}"
        )));
    }
    let mut digits = vec![0usize; m];
    let mut total = 0.0;
    loop {
        let assignment: Vec<usize> = digits.iter().map(|&d| support[d]).collect();
        let weight: f64 = assignment.iter().map(|&x| px_star[x]).product();
        let enc = EncoderMap::new(assignment);
        total += weight * exact_z_drift(state, &enc, dmc, w, ObservationLaw::Message(w))?;
        // Odometer increment over support^M.
        let mut i = 0;
        loop {
            if i == m {
                return Ok(total);
            }
            digits[i] += 1;
            if digits[i] < support.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}
