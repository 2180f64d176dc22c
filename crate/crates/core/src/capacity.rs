//! Channel capacity by alternating maximization (Blahut–Arimoto) with a
//! certified dual gap, plus the full-support restriction the scheme needs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{divergence, ChannelError, Dmc};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const SUPPORT_THRESHOLD: f64 = 1e-9;

/// Rows closer than this entrywise are the same input for restriction purposes.
const DUPLICATE_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("no convergence after {} iterations (gap {})", .best.iterations, .best.gap)]
    NotConverged { best: CapacityResult },
    #[error("restricted alphabet keeps {kept} input(s); need at least 2")]
    TooFewInputs { kept: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Lower bound `I(P_X; P_{Y|X})` at the final iterate, nats.
    pub capacity: f64,
    pub px_star: Vec<f64>,
    pub iterations: usize,
    /// Upper minus lower bound at termination.
    pub gap: f64,
    pub support: Vec<usize>,
}

impl CapacityResult {
    pub fn capacity_bits(&self) -> f64 {
        self.capacity / std::f64::consts::LN_2
    }
}

/// Lower and upper capacity bounds after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Iterator state for the alternating maximization.
///
/// Each [`step`](Self::step) evaluates the divergences `D(P(·|x) ‖ q)` at the
/// current input law, reports the bounds `I(p) ≤ C ≤ max_x D(P(·|x) ‖ q)`, and
/// moves to `p'(x) ∝ p(x) exp(D(P(·|x) ‖ q))`. Inputs that provably carry no
/// mass under any capacity-achieving law are zeroed once the gap is small
/// enough to certify it.
pub struct BlahutArimoto<'a> {
    dmc: &'a Dmc,
    px: Vec<f64>,
    divergences: Vec<f64>,
    iterations: usize,
}

impl<'a> BlahutArimoto<'a> {
    pub fn new(dmc: &'a Dmc) -> Self {
        let n = dmc.input_size();
        Self {
            dmc,
            px: vec![1.0 / n as f64; n],
            divergences: vec![0.0; n],
            iterations: 0,
        }
    }

    pub fn input_law(&self) -> &[f64] {
        &self.px
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `D(P(·|x) ‖ q)` at the law evaluated by the last step.
    pub fn divergences(&self) -> &[f64] {
        &self.divergences
    }

    /// Largest shortfall `max_x D − D(P(·|x) ‖ q)` over inputs above `threshold`
    /// in `law`.
    fn support_spread(&self, law: &[f64], threshold: f64) -> f64 {
        let max = self.divergences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        law.iter()
            .zip(&self.divergences)
            .filter(|(&p, _)| p > threshold)
            .map(|(_, &d)| max - d)
            .fold(0.0, f64::max)
    }

    fn evaluate(&mut self) -> (Bounds, Vec<f64>) {
        let q = self.dmc.output_distribution(&self.px);
        for (x, d) in self.divergences.iter_mut().enumerate() {
            *d = divergence(self.dmc.row(x), &q);
        }
        let lower: f64 = self
            .px
            .iter()
            .zip(&self.divergences)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &d)| p * d)
            .sum();
        let upper = self.divergences.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (Bounds { lower, upper }, q)
    }

    /// Zero out inputs whose divergence is certifiably below capacity.
    ///
    /// With `L = sqrt(2·gap) ≥ ‖q* − q‖₁` (Pinsker plus `D(q*‖q) ≤ gap`),
    /// `D(P(·|x) ‖ q*) ≤ d_x − ln(1 − L / min_{y ∈ supp x} q(y))`; if that is
    /// below the lower bound the input is outside every optimal support.
    fn eliminate(&mut self, bounds: Bounds, q: &[f64]) {
        let l1 = (2.0 * bounds.gap().max(0.0)).sqrt();
        let mut dropped = Vec::new();
        for x in 0..self.px.len() {
            if self.px[x] == 0.0 {
                continue;
            }
            let qmin = self
                .dmc
                .row(x)
                .iter()
                .zip(q)
                .filter(|(&w, _)| w > 0.0)
                .map(|(_, &qy)| qy)
                .fold(f64::INFINITY, f64::min);
            if l1 >= qmin {
                continue;
            }
            let ceiling = self.divergences[x] - (-l1 / qmin).ln_1p();
            if ceiling < bounds.lower {
                dropped.push(x);
            }
        }
        if dropped.is_empty() || dropped.len() == self.px.iter().filter(|&&p| p > 0.0).count() {
            return;
        }
        let mut candidate = self.px.clone();
        for &x in &dropped {
            candidate[x] = 0.0;
        }
        let total: f64 = candidate.iter().sum();
        candidate.iter_mut().for_each(|p| *p /= total);
        // Only commit when it does not lower the bound, keeping the lower
        // bound sequence monotone.
        if mutual_information(self.dmc, &candidate) >= bounds.lower {
            self.px = candidate;
        }
    }

    /// Evaluate bounds at the current law, then advance it.
    pub fn step(&mut self) -> Bounds {
        let (bounds, q) = self.evaluate();
        self.iterations += 1;
        if bounds.gap() <= 0.0 {
            return bounds;
        }
        let shift = self
            .divergences
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        for (p, &d) in self.px.iter_mut().zip(&self.divergences) {
            if *p > 0.0 {
                *p *= (d - shift).exp();
            }
        }
        let total: f64 = self.px.iter().sum();
        self.px.iter_mut().for_each(|p| *p /= total);
        self.eliminate(bounds, &q);
        bounds
    }
}

/// `I(X;Y)` in nats for input law `px`.
pub fn mutual_information(dmc: &Dmc, px: &[f64]) -> f64 {
    let q = dmc.output_distribution(px);
    px.iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(x, &p)| p * divergence(dmc.row(x), &q))
        .sum()
}

pub fn capacity(dmc: &Dmc, tol: f64, max_iter: usize) -> Result<CapacityResult, CapacityError> {
    if !(tol > 0.0) {
        return Err(CapacityError::BadTolerance(tol));
    }
    let mut ba = BlahutArimoto::new(dmc);
    let mut best: Option<(Bounds, Vec<f64>)> = None;
    for _ in 0..max_iter {
        let law = ba.input_law().to_vec();
        let bounds = ba.step();
        // The gap alone bounds the average shortfall; also wait until every
        // retained input sits at the maximum.
        let done = bounds.gap() <= tol && ba.support_spread(&law, SUPPORT_THRESHOLD) <= tol;
        best = Some((bounds, law));
        if done {
            break;
        }
    }
    let (bounds, px) = best.expect("max_iter is at least one");
    let result = CapacityResult {
        capacity: bounds.lower.max(0.0),
        support: support_of(&px, SUPPORT_THRESHOLD),
        px_star: px,
        iterations: ba.iterations(),
        gap: bounds.gap().max(0.0),
    };
    if result.gap > tol {
        return Err(CapacityError::NotConverged { best: result });
    }
    Ok(result)
}

fn support_of(px: &[f64], threshold: f64) -> Vec<usize> {
    px.iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(x, _)| x)
        .collect()
}

/// Channel reduced to a full-support input alphabet.
#[derive(Debug, Clone)]
pub struct Restriction {
    pub dmc: Dmc,
    pub capacity: CapacityResult,
    /// Original indices of the retained inputs.
    pub kept: Vec<usize>,
    /// True when any input was dropped, i.e. the full-support hypothesis had
    /// to be patched.
    pub patched: bool,
}

/// Drop inputs below `threshold` and fold exact duplicate rows into their
/// first occurrence, then re-solve on the smaller alphabet.
pub fn restrict_to_support(
    dmc: &Dmc,
    result: &CapacityResult,
    threshold: f64,
) -> Result<Restriction, CapacityError> {
    let mut kept: Vec<usize> = Vec::new();
    for x in 0..dmc.input_size() {
        if result.px_star[x] <= threshold {
            continue;
        }
        let duplicate = kept.iter().any(|&k| {
            dmc.row(k)
                .iter()
                .zip(dmc.row(x))
                .all(|(a, b)| (a - b).abs() <= DUPLICATE_ROW_TOL)
        });
        if !duplicate {
            kept.push(x);
        }
    }
    loop {
        if kept.len() < 2 {
            return Err(CapacityError::TooFewInputs { kept: kept.len() });
        }
        let reduced = dmc.restrict_inputs(&kept)?;
        let solved = capacity(&reduced, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        if solved.px_star.iter().all(|&p| p > threshold) {
            return Ok(Restriction {
                patched: kept.len() != dmc.input_size(),
                dmc: reduced,
                capacity: solved,
                kept,
            });
        }
        kept = solved
            .px_star
            .iter()
            .zip(&kept)
            .filter(|(&p, _)| p > threshold)
            .map(|(_, &x)| x)
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::binary_entropy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn random_channel(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> Dmc {
        let rows = (0..nx)
            .map(|_| {
                let r: Vec<f64> = (0..ny).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Dmc::new(rows).unwrap()
    }

    #[test]
    fn bsc_capacity_closed_form() {
        let r = capacity(&Dmc::bsc(0.1).unwrap(), 1e-9, DEFAULT_MAX_ITER).unwrap();
        assert!((r.capacity - (LN_2 - binary_entropy(0.1))).abs() < 1e-9);
        assert!((r.capacity - 0.368064).abs() < 1e-6);
        assert!((r.px_star[0] - 0.5).abs() < 1e-9);
        assert!(r.gap <= 1e-9);
    }

    #[test]
    fn noiseless_and_useless_channels() {
        let id = Dmc::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = capacity(&id, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((r.capacity - LN_2).abs() < 1e-12);
        assert_eq!(r.px_star, vec![0.5, 0.5]);

        let flat = Dmc::new(vec![vec![0.3, 0.7]; 3]).unwrap();
        let r = capacity(&flat, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(r.capacity.abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_tolerance_and_reports_best_on_timeout() {
        let bsc = Dmc::bsc(0.2).unwrap();
        assert!(matches!(capacity(&bsc, 0.0, 10), Err(CapacityError::BadTolerance(_))));
        let skew = Dmc::new(vec![vec![0.9, 0.1], vec![0.3, 0.7], vec![0.5, 0.5]]).unwrap();
        match capacity(&skew, 1e-300, 3) {
            Err(CapacityError::NotConverged { best }) => {
                assert_eq!(best.iterations, 3);
                assert!(best.capacity > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn bounds_bracket_and_lower_bound_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let dmc = random_channel(&mut rng, 4, 3);
            let truth = capacity(&dmc, 1e-12, DEFAULT_MAX_ITER).unwrap().capacity;
            let mut ba = BlahutArimoto::new(&dmc);
            let mut prev = f64::NEG_INFINITY;
            for _ in 0..500 {
                let b = ba.step();
                assert!(b.lower >= prev - 1e-15, "lower bound decreased");
                assert!(b.lower <= truth + 1e-12 && b.upper >= truth - 1e-12);
                prev = b.lower;
            }
        }
    }

    #[test]
    fn kkt_on_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let dmc = random_channel(&mut rng, 3, 4);
            let r = capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let q = dmc.output_distribution(&r.px_star);
            for x in 0..3 {
                let d = divergence(dmc.row(x), &q);
                assert!(d <= r.capacity + 10.0 * DEFAULT_TOL + r.gap);
                if r.support.contains(&x) {
                    assert!((d - r.capacity).abs() <= 10.0 * DEFAULT_TOL, "x={x} d={d} C={}", r.capacity);
                }
            }
        }
    }

    #[test]
    fn grid_search_oracle_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..3 {
            let dmc = random_channel(&mut rng, 3, 3);
            let r = capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            let steps = 1000;
            let mut best: f64 = 0.0;
            for i in 0..=steps {
                for j in 0..=(steps - i) {
                    let p = [
                        i as f64 / steps as f64,
                        j as f64 / steps as f64,
                        (steps - i - j) as f64 / steps as f64,
                    ];
                    best = best.max(mutual_information(&dmc, &p));
                }
            }
            assert!(best <= r.capacity + 1e-12);
            assert!(r.capacity - best < 1e-4, "grid {best} vs {}", r.capacity);
        }
    }

    #[test]
    fn restriction_examples() {
        let bsc = Dmc::bsc(0.1).unwrap();
        let r = capacity(&bsc, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let restricted = restrict_to_support(&bsc, &r, SUPPORT_THRESHOLD).unwrap();
        assert!(!restricted.patched);
        assert_eq!(restricted.kept, vec![0, 1]);

        let dup = Dmc::new(vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.9, 0.1]]).unwrap();
        let r = capacity(&dup, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let restricted = restrict_to_support(&dup, &r, SUPPORT_THRESHOLD).unwrap();
        assert!(restricted.patched);
        assert_eq!(restricted.kept, vec![0, 1]);
        assert!((restricted.capacity.capacity - r.capacity).abs() < 1e-9);
        assert!(restricted.capacity.px_star.iter().all(|&p| p > SUPPORT_THRESHOLD));

        assert!(matches!(
            restrict_to_support(&bsc, &r_for(&bsc), 0.9),
            Err(CapacityError::TooFewInputs { kept: 0 })
        ));
    }

    fn r_for(dmc: &Dmc) -> CapacityResult {
        capacity(dmc, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
    }

    #[test]
    fn useless_input_is_dropped() {
        // Input 2 is a noisy mixture that no optimal law uses.
        let dmc = Dmc::new(vec![vec![0.99, 0.01], vec![0.01, 0.99], vec![0.5, 0.5]]).unwrap();
        let r = r_for(&dmc);
        assert!(r.px_star[2] <= SUPPORT_THRESHOLD);
        let restricted = restrict_to_support(&dmc, &r, SUPPORT_THRESHOLD).unwrap();
        assert_eq!(restricted.kept, vec![0, 1]);
        assert!(restricted.patched);
    }
}
