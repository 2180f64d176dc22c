//! Discrete memoryless channels and the per-channel divergence quantities
//! (B, B*, C2, T) that drive the two-phase scheme.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row sums must be within this of 1 to be accepted as-is.
pub const ROW_TOLERANCE: f64 = 1e-12;
/// Rows drifting by at most this much are silently renormalized.
pub const RENORMALIZE_LIMIT: f64 = 1e-9;
/// Two divergences closer than this (relative) are treated as a tie.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel must have at least one input and one output symbol")]
    Empty,
    #[error("row {row} has {len} entries, expected {expected}")]
    RaggedRow { row: usize, len: usize, expected: usize },
    #[error("entry P({y}|{x}) = {value} is not a probability")]
    EntryOutOfRange { x: usize, y: usize, value: f64 },
    #[error("row {row} sums to {sum}, off by more than {RENORMALIZE_LIMIT}")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("{which} labels: expected {expected}, got {got}")]
    LabelCount {
        which: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("coding needs at least two inputs and two outputs, channel is {inputs}x{outputs}")]
    TooSmallForCoding { inputs: usize, outputs: usize },
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("vector is not a probability distribution (sum {0})")]
    NotADistribution(f64),
    #[error("T is infinite: some output has zero probability under one input only")]
    InfiniteT,
    #[error("reading channel file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing channel file: {0}")]
    Json(#[from] serde_json::Error),
}

/// On-disk channel description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    pub transition: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_in: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_out: Option<Vec<String>>,
}

/// A row-stochastic transition kernel `P(y|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmc {
    inputs: usize,
    outputs: usize,
    kernel: Vec<f64>,
    log_kernel: Vec<f64>,
    labels_in: Option<Vec<String>>,
    labels_out: Option<Vec<String>>,
}

impl Dmc {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ChannelError> {
        let inputs = rows.len();
        let outputs = rows.first().map_or(0, Vec::len);
        if inputs == 0 || outputs == 0 {
            return Err(ChannelError::Empty);
        }
        let mut kernel = Vec::with_capacity(inputs * outputs);
        for (x, row) in rows.into_iter().enumerate() {
            if row.len() != outputs {
                return Err(ChannelError::RaggedRow {
                    row: x,
                    len: row.len(),
                    expected: outputs,
                });
            }
            for (y, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(ChannelError::EntryOutOfRange { x, y, value });
                }
            }
            let sum: f64 = row.iter().sum();
            let drift = (sum - 1.0).abs();
            if drift > RENORMALIZE_LIMIT {
                return Err(ChannelError::RowNotNormalized { row: x, sum });
            }
            if drift > ROW_TOLERANCE {
                kernel.extend(row.iter().map(|v| v / sum));
            } else {
                kernel.extend(row);
            }
        }
        let log_kernel = kernel.iter().map(|p| p.ln()).collect();
        Ok(Self {
            inputs,
            outputs,
            kernel,
            log_kernel,
            labels_in: None,
            labels_out: None,
        })
    }

    pub fn with_labels(
        mut self,
        labels_in: Option<Vec<String>>,
        labels_out: Option<Vec<String>>,
    ) -> Result<Self, ChannelError> {
        if let Some(l) = &labels_in {
            if l.len() != self.inputs {
                return Err(ChannelError::LabelCount {
                    which: "input",
                    expected: self.inputs,
                    got: l.len(),
                });
            }
        }
        if let Some(l) = &labels_out {
            if l.len() != self.outputs {
                return Err(ChannelError::LabelCount {
                    which: "output",
                    expected: self.outputs,
                    got: l.len(),
                });
            }
        }
        self.labels_in = labels_in;
        self.labels_out = labels_out;
        Ok(self)
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self, ChannelError> {
        Self::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    pub fn from_file(file: ChannelFile) -> Result<Self, ChannelError> {
        Self::new(file.transition)?.with_labels(file.labels_in, file.labels_out)
    }

    pub fn from_json_str(s: &str) -> Result<Self, ChannelError> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ChannelError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> ChannelFile {
        ChannelFile {
            transition: self.rows().map(<[f64]>::to_vec).collect(),
            labels_in: self.labels_in.clone(),
            labels_out: self.labels_out.clone(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.inputs
    }

    pub fn output_size(&self) -> usize {
        self.outputs
    }

    pub fn labels_in(&self) -> Option<&[String]> {
        self.labels_in.as_deref()
    }

    pub fn labels_out(&self) -> Option<&[String]> {
        self.labels_out.as_deref()
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.kernel[x * self.outputs..(x + 1) * self.outputs]
    }

    /// `ln P(·|x)`; zero entries are `-inf`.
    #[inline]
    pub fn log_row(&self, x: usize) -> &[f64] {
        &self.log_kernel[x * self.outputs..(x + 1) * self.outputs]
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.kernel[x * self.outputs + y]
    }

    #[inline]
    pub fn log_prob(&self, x: usize, y: usize) -> f64 {
        self.log_kernel[x * self.outputs + y]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.kernel.chunks_exact(self.outputs)
    }

    /// Output law `Σ_x p(x) P(·|x)`.
    pub fn output_distribution(&self, px: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.outputs];
        for (row, &w) in self.rows().zip(px) {
            for (qy, &p) in q.iter_mut().zip(row) {
                *qy += w * p;
            }
        }
        q
    }

    /// Keeps only the listed inputs, in the given order.
    pub fn restrict_inputs(&self, keep: &[usize]) -> Result<Self, ChannelError> {
        let rows = keep.iter().map(|&x| self.row(x).to_vec()).collect();
        let labels_in = self
            .labels_in
            .as_ref()
            .map(|l| keep.iter().map(|&x| l[x].clone()).collect());
        Self::new(rows)?.with_labels(labels_in, self.labels_out.clone())
    }

    /// Coding needs a genuine choice of input and an observable output.
    pub fn ensure_codable(&self) -> Result<(), ChannelError> {
        if self.inputs < 2 || self.outputs < 2 {
            return Err(ChannelError::TooSmallForCoding {
                inputs: self.inputs,
                outputs: self.outputs,
            });
        }
        Ok(())
    }
}

/// `D(p‖q)` in nats; `+inf` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, ChannelError> {
    if p.len() != q.len() {
        return Err(ChannelError::LengthMismatch(p.len(), q.len()));
    }
    for v in [p, q] {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_LIMIT || v.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(ChannelError::NotADistribution(sum));
        }
    }
    Ok(divergence(p, q))
}

/// Unchecked divergence used on rows that are already validated.
pub(crate) fn divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut d = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b == 0.0 {
                return f64::INFINITY;
            }
            d += a * (a / b).ln();
        }
    }
    d
}

/// Per-channel quantities. `capacity` and `px_star` are filled in once the
/// capacity solver has run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub b: f64,
    pub b_star: f64,
    pub capacity: Option<f64>,
    pub c2: f64,
    pub t_ratio: f64,
    pub px_star: Option<Vec<f64>>,
    pub x0: usize,
    pub x0_prime: usize,
    pub finite_b: bool,
}

impl ChannelInfo {
    pub fn with_capacity(mut self, capacity: f64, px_star: Vec<f64>) -> Self {
        self.capacity = Some(capacity);
        self.px_star = Some(px_star);
        self
    }

    /// `(ln T)·1{ln T ≥ θ}`.
    pub fn varphi(&self, theta: f64) -> Result<f64, ChannelError> {
        if !self.finite_b {
            return Err(ChannelError::InfiniteT);
        }
        let ln_t = self.t_ratio.ln();
        Ok(if ln_t >= theta { ln_t } else { 0.0 })
    }
}

fn is_tie(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

pub fn compute_info(dmc: &Dmc) -> ChannelInfo {
    let n = dmc.input_size();
    let pairs: Vec<(usize, usize)> = if n == 1 {
        vec![(0, 0)]
    } else {
        (0..n)
            .flat_map(|x| (0..n).filter(move |&xp| xp != x).map(move |xp| (x, xp)))
            .collect()
    };

    let forward = |&(x, xp): &(usize, usize)| divergence(dmc.row(x), dmc.row(xp));
    let b = pairs.iter().map(forward).fold(f64::NEG_INFINITY, f64::max);
    let finite_b = b.is_finite();

    // Among the B-maximizers take the largest reverse divergence; the first
    // (lexicographically smallest) pair reaching it wins.
    let candidates: Vec<((usize, usize), f64)> = pairs
        .iter()
        .filter(|pair| is_tie(forward(pair), b))
        .map(|&(x, xp)| ((x, xp), divergence(dmc.row(xp), dmc.row(x))))
        .collect();
    let b_star = candidates
        .iter()
        .map(|&(_, r)| r)
        .fold(f64::NEG_INFINITY, f64::max);
    let (x0, x0_prime) = candidates
        .iter()
        .find(|&&(_, r)| is_tie(r, b_star))
        .map(|&(pair, _)| pair)
        .expect("candidate set is never empty");

    let mut c2: f64 = 0.0;
    let mut t_ratio: f64 = 1.0;
    for x in 0..n {
        for xp in 0..n {
            for (&p, &q) in dmc.row(x).iter().zip(dmc.row(xp)) {
                if p > 0.0 && q > 0.0 {
                    t_ratio = t_ratio.max(p / q);
                    c2 = c2.max((p / q).ln().abs());
                }
            }
        }
    }

    ChannelInfo {
        b,
        b_star,
        capacity: None,
        c2,
        t_ratio,
        px_star: None,
        x0,
        x0_prime,
        finite_b,
    }
}

/// `varphi(θ) = (ln T)_θ` computed straight from the kernel.
pub fn varphi(dmc: &Dmc, theta: f64) -> Result<f64, ChannelError> {
    compute_info(dmc).varphi(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let d = kl_divergence(&[0.9, 0.1], &[0.1, 0.9]).unwrap();
        assert!(close(d, 0.8 * 9f64.ln(), 1e-15));
        assert!(close(d, 1.757780, 1e-6));
        let d = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!(close(d, std::f64::consts::LN_2, 1e-15));
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kl_errors() {
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0]),
            Err(ChannelError::LengthMismatch(2, 1))
        ));
        assert!(matches!(
            kl_divergence(&[0.5, 0.6], &[0.5, 0.5]),
            Err(ChannelError::NotADistribution(_))
        ));
    }

    #[test]
    fn construction_validates_rows() {
        assert!(matches!(Dmc::new(vec![]), Err(ChannelError::Empty)));
        assert!(matches!(
            Dmc::new(vec![vec![0.5, 0.5], vec![1.0]]),
            Err(ChannelError::RaggedRow { row: 1, .. })
        ));
        assert!(matches!(
            Dmc::new(vec![vec![1.5, -0.5]]),
            Err(ChannelError::EntryOutOfRange { .. })
        ));
        assert!(matches!(
            Dmc::new(vec![vec![0.5, 0.4]]),
            Err(ChannelError::RowNotNormalized { row: 0, .. })
        ));
        // Small drift is renormalized.
        let d = Dmc::new(vec![vec![0.5 + 5e-10, 0.5]]).unwrap();
        assert!(close(d.row(0).iter().sum::<f64>(), 1.0, 1e-15));
        // Single-input channels are fine for information queries, not coding.
        let one = Dmc::new(vec![vec![0.3, 0.7]]).unwrap();
        assert!(one.ensure_codable().is_err());
        let info = compute_info(&one);
        assert_eq!((info.b, info.x0, info.x0_prime), (0.0, 0, 0));
    }

    #[test]
    fn json_ingestion() {
        let s = r#"{"transition": [[0.9, 0.1], [0.1, 0.9]], "labels_in": ["a", "b"], "labels_out": ["0", "1"]}"#;
        let d = Dmc::from_json_str(s).unwrap();
        assert_eq!(d.labels_in().unwrap(), ["a", "b"]);
        assert_eq!(d, Dmc::bsc(0.1).unwrap().with_labels(d.labels_in().map(<[_]>::to_vec), d.labels_out().map(<[_]>::to_vec)).unwrap());
        let bad = r#"{"transition": [[0.9, 0.1]], "labels_in": ["a", "b"]}"#;
        assert!(matches!(Dmc::from_json_str(bad), Err(ChannelError::LabelCount { .. })));
        let no_labels = r#"{"transition": [[1.0, 0.0], [0.0, 1.0]]}"#;
        assert!(Dmc::from_json_str(no_labels).unwrap().labels_in().is_none());
    }

    #[test]
    fn bsc_info() {
        let info = compute_info(&Dmc::bsc(0.1).unwrap());
        assert!(close(info.b, 1.757780, 1e-6));
        assert!(close(info.b_star, 1.757780, 1e-6));
        assert!(close(info.c2, 9f64.ln(), 1e-12));
        assert!(close(info.t_ratio, 9.0, 1e-12));
        assert_eq!((info.x0, info.x0_prime), (0, 1));
        assert!(info.finite_b);
    }

    #[test]
    fn asymmetric_info() {
        let dmc = Dmc::new(vec![vec![0.95, 0.05], vec![0.2, 0.8]]).unwrap();
        let info = compute_info(&dmc);
        assert!(close(info.b, 1.906442, 1e-6));
        assert!(close(info.b_star, 1.341608, 1e-6));
        assert_eq!((info.x0, info.x0_prime), (1, 0));
    }

    #[test]
    fn disjoint_supports_are_infinite() {
        let info = compute_info(&Dmc::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        assert!(!info.finite_b);
        assert_eq!(info.b, f64::INFINITY);
        assert!(info.varphi(0.0).is_err());
    }

    #[test]
    fn varphi_examples() {
        let bsc = Dmc::bsc(0.1).unwrap();
        assert_eq!(varphi(&bsc, 3.0).unwrap(), 0.0);
        assert!(close(varphi(&bsc, 1.0).unwrap(), 2.197225, 1e-6));
        assert!(close(varphi(&bsc, 0.0).unwrap(), 9f64.ln(), 1e-15));
        let flat = Dmc::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(varphi(&flat, 0.0).unwrap(), 0.0);
    }

    fn channel_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..=6, 2usize..=6).prop_flat_map(|(nx, ny)| {
            prop::collection::vec(prop::collection::vec(0.01f64..1.0, ny), nx).prop_map(|rows| {
                rows.into_iter()
                    .map(|r| {
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|v| v / s).collect()
                    })
                    .collect()
            })
        })
    }

    fn sparse_channel_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..=4, 2usize..=4).prop_flat_map(|(nx, ny)| {
            prop::collection::vec(
                prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..1.0], ny),
                nx,
            )
            .prop_map(|rows| {
                rows.into_iter()
                    .map(|mut r| {
                        if r.iter().all(|&v| v == 0.0) {
                            r[0] = 1.0;
                        }
                        let s: f64 = r.iter().sum();
                        r.into_iter().map(|v| v / s).collect()
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn self_divergence_is_zero(rows in channel_strategy()) {
            let dmc = Dmc::new(rows).unwrap();
            for row in dmc.rows() {
                prop_assert_eq!(kl_divergence(row, row).unwrap(), 0.0);
            }
        }

        #[test]
        fn b_matches_brute_force(rows in channel_strategy()) {
            let dmc = Dmc::new(rows.clone()).unwrap();
            let info = compute_info(&dmc);
            let mut brute = f64::NEG_INFINITY;
            for p in &rows {
                for q in &rows {
                    let d: f64 = p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum();
                    brute = brute.max(d);
                }
            }
            prop_assert!((info.b - brute).abs() <= 1e-12 * brute.max(1.0));
            prop_assert!(info.b >= info.b_star - 1e-12);
            prop_assert!(info.b_star >= 0.0);
            let fwd = divergence(dmc.row(info.x0), dmc.row(info.x0_prime));
            let rev = divergence(dmc.row(info.x0_prime), dmc.row(info.x0));
            prop_assert!((fwd - info.b).abs() <= 1e-12 * info.b.max(1.0));
            prop_assert!((rev - info.b_star).abs() <= 1e-12 * info.b_star.max(1.0));
            // Strictly positive kernels: C2 = ln T.
            prop_assert!((info.c2 - info.t_ratio.ln()).abs() <= 1e-12);
        }

        #[test]
        fn finite_b_iff_supports_nest(rows in sparse_channel_strategy()) {
            let dmc = Dmc::new(rows.clone()).unwrap();
            let info = compute_info(&dmc);
            let nested = rows.iter().all(|p| rows.iter().all(|q| {
                p.iter().zip(q).all(|(&a, &b)| a == 0.0 || b > 0.0)
            }));
            prop_assert_eq!(info.finite_b, nested);
        }
    }
}
