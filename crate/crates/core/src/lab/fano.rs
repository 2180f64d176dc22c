use serde::{Deserialize, Serialize};

use crate::numeric::binary_entropy;

/// `h_b(p) + p·ln(M − 1)`.
pub fn fano_rhs(pe: f64, messages: usize) -> f64 {
    binary_entropy(pe) + pe * ((messages - 1) as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoReport {
    pub mean_entropy: f64,
    pub rhs: f64,
    /// Three times the summed interval half-widths.
    pub slack: f64,
    pub pass: bool,
}

/// Compare the mean posterior entropy at stopping against Fano's bound.
///
/// `entropy_half_width` is the 95% half-width of the entropy mean and
/// `pe_upper` the upper end of the error-probability interval; the latter
/// enters as the bound's increase between `pe_hat` and `pe_upper`.
pub fn fano_check(
    mean_entropy: f64,
    entropy_half_width: f64,
    pe_hat: f64,
    pe_upper: f64,
    messages: usize,
) -> FanoReport {
    assert!(messages >= 2);
    // The bound increases in p up to (M − 1)/M.
    let peak = (messages - 1) as f64 / messages as f64;
    let rhs = fano_rhs(pe_hat.min(peak), messages);
    let rhs_upper = fano_rhs(pe_upper.max(pe_hat).min(peak), messages);
    let slack = 3.0 * (entropy_half_width.max(0.0) + (rhs_upper - rhs).max(0.0));
    FanoReport {
        mean_entropy,
        rhs,
        slack,
        pass: mean_entropy <= rhs + slack,
    }
}
