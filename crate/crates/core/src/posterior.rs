//! Log-domain posterior over messages, log-odds, and exact one-step drift
//! functionals computed by enumerating the output alphabet.

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::channel::Dmc;
use crate::numeric::{log1mexp, logsumexp};

/// Exact drift functionals enumerate outputs; larger alphabets are refused.
pub const MAX_ENUMERATED_OUTPUTS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum PosteriorError {
    #[error("need at least two messages, got {0}")]
    TooFewMessages(usize),
    #[error("encoder map covers {got} messages, posterior has {expected}")]
    MapSize { expected: usize, got: usize },
    #[error("message {message} mapped to input {input}, channel has {inputs} inputs")]
    InputOutOfRange {
        message: usize,
        input: usize,
        inputs: usize,
    },
    #[error("output {y} outside alphabet of size {outputs}")]
    OutputOutOfRange { y: usize, outputs: usize },
    #[error("output {0} has zero probability under the current posterior (encoder/decoder desync)")]
    ImpossibleObservation(usize),
    #[error("probabilities must be non-negative and sum to 1")]
    NotNormalized,
    #[error("entropy is zero; log-entropy drift undefined")]
    ZeroEntropy,
    #[error("log-odds of message {0} is infinite")]
    InfiniteLogOdds(usize),
    #[error("message {index} outside 0..{messages}")]
    MessageOutOfRange { index: usize, messages: usize },
    #[error("exact enumeration limited to {MAX_ENUMERATED_OUTPUTS} outputs, channel has {0}")]
    AlphabetTooLarge(usize),
}

/// The input symbol each message sends at the current step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderMap {
    assignment: Vec<usize>,
}

impl EncoderMap {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self { assignment }
    }

    /// Every message on the same input.
    pub fn constant(messages: usize, input: usize) -> Self {
        Self::new(vec![input; messages])
    }

    /// `leader → x0`, everyone else `→ x0_prime`.
    pub fn binary(messages: usize, leader: usize, x0: usize, x0_prime: usize) -> Self {
        let mut assignment = vec![x0_prime; messages];
        assignment[leader] = x0;
        Self::new(assignment)
    }

    #[inline]
    pub fn input_for(&self, message: usize) -> usize {
        self.assignment[message]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    fn check(&self, messages: usize, dmc: &Dmc) -> Result<(), PosteriorError> {
        if self.assignment.len() != messages {
            return Err(PosteriorError::MapSize {
                expected: messages,
                got: self.assignment.len(),
            });
        }
        let inputs = dmc.input_size();
        if let Some((message, &input)) = self.assignment.iter().enumerate().find(|(_, &x)| x >= inputs) {
            return Err(PosteriorError::InputOutOfRange {
                message,
                input,
                inputs,
            });
        }
        Ok(())
    }
}

/// Which law generates the next output when taking an expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationLaw {
    /// Posterior predictive `p(y) = Σ_j p_j P(y | enc(j))`.
    Predictive,
    /// Outputs generated by the given message's input.
    Message(usize),
}

/// Posterior `P(W = j | Y^n)` stored as natural logs.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorState {
    log_post: Vec<f64>,
    n: usize,
}

impl PosteriorState {
    pub fn uniform(messages: usize) -> Result<Self, PosteriorError> {
        if messages < 2 {
            return Err(PosteriorError::TooFewMessages(messages));
        }
        Ok(Self {
            log_post: vec![-(messages as f64).ln(); messages],
            n: 0,
        })
    }

    pub fn from_probabilities(probs: &[f64]) -> Result<Self, PosteriorError> {
        if probs.len() < 2 {
            return Err(PosteriorError::TooFewMessages(probs.len()));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(PosteriorError::NotNormalized);
        }
        let mut log_post: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        let norm = logsumexp(&log_post);
        log_post.iter_mut().for_each(|l| *l -= norm);
        Ok(Self { log_post, n: 0 })
    }

    pub fn messages(&self) -> usize {
        self.log_post.len()
    }

    /// Number of observations absorbed so far.
    pub fn time(&self) -> usize {
        self.n
    }

    pub fn log_posterior(&self) -> &[f64] {
        &self.log_post
    }

    #[inline]
    pub fn log_prob(&self, j: usize) -> f64 {
        self.log_post[j]
    }

    pub fn prob(&self, j: usize) -> f64 {
        self.log_post[j].exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_post.iter().map(|l| l.exp()).collect()
    }

    /// Most likely message; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &l) in self.log_post.iter().enumerate().skip(1) {
            if l > self.log_post[best] {
                best = j;
            }
        }
        best
    }

    /// `ln(1 − p_j)` as the log-sum of every other message's mass.
    pub fn log_complement(&self, j: usize) -> f64 {
        let max = self
            .log_post
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, &l)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = self
            .log_post
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(_, &l)| (l - max).exp())
            .sum();
        max + sum.ln()
    }

    /// `Z_j = ln(p_j / (1 − p_j))`.
    ///
    /// Below one half `log1mexp` is exact enough; above it `1 − p_j` comes
    /// from the other messages' mass, since `ln p_j` itself has rounded to
    /// (nearly) zero once the leader is confident.
    pub fn log_odds(&self, j: usize) -> f64 {
        let l = self.log_post[j];
        if l < -LN_2 {
            l - log1mexp(l)
        } else {
            l - self.log_complement(j)
        }
    }

    pub fn log_odds_all(&self) -> Vec<f64> {
        (0..self.messages()).map(|j| self.log_odds(j)).collect()
    }

    /// Absorb output `y` sent under `enc`.
    pub fn update(&mut self, enc: &EncoderMap, dmc: &Dmc, y: usize) -> Result<(), PosteriorError> {
        enc.check(self.messages(), dmc)?;
        if y >= dmc.output_size() {
            return Err(PosteriorError::OutputOutOfRange {
                y,
                outputs: dmc.output_size(),
            });
        }
        self.update_unchecked(enc.assignment(), dmc, y)
    }

    /// Hot-path update for callers that built `assignment` themselves.
    pub(crate) fn update_unchecked(
        &mut self,
        assignment: &[usize],
        dmc: &Dmc,
        y: usize,
    ) -> Result<(), PosteriorError> {
        let mut max = f64::NEG_INFINITY;
        for (l, &x) in self.log_post.iter_mut().zip(assignment) {
            *l += dmc.log_prob(x, y);
            if *l > max {
                max = *l;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(PosteriorError::ImpossibleObservation(y));
        }
        let sum: f64 = self.log_post.iter().map(|&l| (l - max).exp()).sum();
        let norm = max + sum.ln();
        self.log_post.iter_mut().for_each(|l| *l -= norm);
        self.n += 1;
        Ok(())
    }

    /// Functional form of [`update`](Self::update).
    pub fn bayes_update(&self, enc: &EncoderMap, dmc: &Dmc, y: usize) -> Result<Self, PosteriorError> {
        let mut next = self.clone();
        next.update(enc, dmc, y)?;
        Ok(next)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        let lead = self.argmax();
        let mut h = 0.0;
        for (j, &l) in self.log_post.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            let neg_log = if j == lead && l > -LN_2 {
                // −ln p = −ln(1 − rest), keeping the tiny rest mass.
                -(-self.log_complement(j).exp()).ln_1p()
            } else {
                -l
            };
            h += l.exp() * neg_log;
        }
        h.max(0.0)
    }

    /// `ln p(y)` for every output under the predictive law.
    fn log_predictive(&self, enc: &EncoderMap, dmc: &Dmc) -> Vec<f64> {
        let mut buf = vec![0.0; self.messages()];
        (0..dmc.output_size())
            .map(|y| {
                for ((b, &l), &x) in buf.iter_mut().zip(&self.log_post).zip(enc.assignment()) {
                    *b = l + dmc.log_prob(x, y);
                }
                logsumexp(&buf)
            })
            .collect()
    }

    fn prepare(&self, enc: &EncoderMap, dmc: &Dmc) -> Result<(), PosteriorError> {
        enc.check(self.messages(), dmc)?;
        if dmc.output_size() > MAX_ENUMERATED_OUTPUTS {
            return Err(PosteriorError::AlphabetTooLarge(dmc.output_size()));
        }
        Ok(())
    }

    /// `(p(y), posterior after y)` over outputs with `p(y) > 0`.
    fn branches(&self, enc: &EncoderMap, dmc: &Dmc) -> Vec<(usize, f64, Self)> {
        self.log_predictive(enc, dmc)
            .into_iter()
            .enumerate()
            .filter(|&(_, lp)| lp > f64::NEG_INFINITY)
            .map(|(y, lp)| {
                let mut next = self.clone();
                next.update_unchecked(enc.assignment(), dmc, y)
                    .expect("positive predictive mass");
                (y, lp.exp(), next)
            })
            .collect()
    }
}

/// `E[H(W|Y^n) − H(W|Y^{n+1}) | Y^n]`, exact.
pub fn exact_entropy_drift(
    state: &PosteriorState,
    enc: &EncoderMap,
    dmc: &Dmc,
) -> Result<f64, PosteriorError> {
    state.prepare(enc, dmc)?;
    let h = state.entropy();
    Ok(state
        .branches(enc, dmc)
        .iter()
        .map(|(_, p, next)| p * (h - next.entropy()))
        .sum())
}

/// `E[ln H(W|Y^n) − ln H(W|Y^{n+1}) | Y^n]`, exact.
pub fn exact_log_entropy_drift(
    state: &PosteriorState,
    enc: &EncoderMap,
    dmc: &Dmc,
) -> Result<f64, PosteriorError> {
    truncated_log_entropy_drift(state, enc, dmc, f64::NEG_INFINITY)
}

/// `E[(ln H_n − ln H_{n+1})·1{ln H_n − ln H_{n+1} ≥ θ} | Y^n]`, exact.
pub fn truncated_log_entropy_drift(
    state: &PosteriorState,
    enc: &EncoderMap,
    dmc: &Dmc,
    theta: f64,
) -> Result<f64, PosteriorError> {
    state.prepare(enc, dmc)?;
    let h = state.entropy();
    if h <= 0.0 {
        return Err(PosteriorError::ZeroEntropy);
    }
    let ln_h = h.ln();
    Ok(state
        .branches(enc, dmc)
        .iter()
        .map(|(_, p, next)| {
            let delta = ln_h - next.entropy().ln();
            if delta >= theta {
                p * delta
            } else {
                0.0
            }
        })
        .sum())
}

/// `E[Z_j(n+1) − Z_j(n) | Y^n]` with outputs drawn from `law`, exact.
pub fn exact_z_drift(
    state: &PosteriorState,
    enc: &EncoderMap,
    dmc: &Dmc,
    j: usize,
    law: ObservationLaw,
) -> Result<f64, PosteriorError> {
    state.prepare(enc, dmc)?;
    let m = state.messages();
    if j >= m {
        return Err(PosteriorError::MessageOutOfRange { index: j, messages: m });
    }
    let z = state.log_odds(j);
    if !z.is_finite() {
        return Err(PosteriorError::InfiniteLogOdds(j));
    }
    let weights: Vec<f64> = match law {
        ObservationLaw::Predictive => state.log_predictive(enc, dmc).iter().map(|l| l.exp()).collect(),
        ObservationLaw::Message(w) => {
            if w >= m {
                return Err(PosteriorError::MessageOutOfRange { index: w, messages: m });
            }
            dmc.row(enc.input_for(w)).to_vec()
        }
    };
    let mut drift = 0.0;
    for (y, &weight) in weights.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let mut next = state.clone();
        next.update_unchecked(enc.assignment(), dmc, y)?;
        drift += weight * (next.log_odds(j) - z);
    }
    Ok(drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{capacity, DEFAULT_MAX_ITER, DEFAULT_TOL};
    use crate::channel::compute_info;
    use crate::numeric::binary_entropy;
    use proptest::prelude::*;

    fn bsc() -> Dmc {
        Dmc::bsc(0.1).unwrap()
    }

    #[test]
    fn uniform_init() {
        let s = PosteriorState::uniform(2).unwrap();
        assert!(s.log_odds(0).abs() < 1e-15 && s.log_odds(1).abs() < 1e-15);
        let s = PosteriorState::uniform(16).unwrap();
        for z in s.log_odds_all() {
            assert!((z + 15f64.ln()).abs() < 1e-12);
            assert!((z + 2.70805).abs() < 1e-5);
        }
        assert_eq!(PosteriorState::uniform(1), Err(PosteriorError::TooFewMessages(1)));
    }

    #[test]
    fn two_message_bayes_by_hand() {
        let s = PosteriorState::uniform(2).unwrap();
        let enc = EncoderMap::new(vec![0, 1]);
        let next = s.bayes_update(&enc, &bsc(), 0).unwrap();
        assert!((next.prob(0) - 0.9).abs() < 1e-15);
        assert!((next.prob(1) - 0.1).abs() < 1e-15);
        assert!((next.log_odds(0) - 9f64.ln()).abs() < 1e-12);
        assert_eq!(next.time(), 1);
    }

    #[test]
    fn uninformative_map_leaves_posterior() {
        let s = PosteriorState::from_probabilities(&[0.5, 0.3, 0.2]).unwrap();
        let next = s.bayes_update(&EncoderMap::constant(3, 1), &bsc(), 0).unwrap();
        for (a, b) in s.log_posterior().iter().zip(next.log_posterior()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_likelihood_eliminates() {
        let erasure = Dmc::new(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]).unwrap();
        let s = PosteriorState::uniform(4).unwrap();
        let enc = EncoderMap::new(vec![0, 0, 1, 1]);
        let next = s.bayes_update(&enc, &erasure, 0).unwrap();
        assert_eq!(next.log_prob(2), f64::NEG_INFINITY);
        assert_eq!(next.log_prob(3), f64::NEG_INFINITY);
        assert!((next.prob(0) - 0.5).abs() < 1e-15);
        // An eliminated message stays eliminated.
        let again = next.bayes_update(&EncoderMap::new(vec![0, 1, 0, 1]), &erasure, 1).unwrap();
        assert_eq!(again.log_prob(2), f64::NEG_INFINITY);
    }

    #[test]
    fn update_errors() {
        let point = PosteriorState::from_probabilities(&[1.0, 0.0]).unwrap();
        let noiseless = Dmc::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let enc = EncoderMap::new(vec![0, 1]);
        assert_eq!(
            point.bayes_update(&enc, &noiseless, 1),
            Err(PosteriorError::ImpossibleObservation(1))
        );
        assert!(matches!(
            point.bayes_update(&EncoderMap::new(vec![0]), &noiseless, 0),
            Err(PosteriorError::MapSize { .. })
        ));
        assert!(matches!(
            point.bayes_update(&EncoderMap::new(vec![0, 5]), &noiseless, 0),
            Err(PosteriorError::InputOutOfRange { .. })
        ));
        assert!(matches!(
            point.bayes_update(&enc, &noiseless, 7),
            Err(PosteriorError::OutputOutOfRange { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        let s = PosteriorState::uniform(4).unwrap();
        assert!((s.entropy() - 4f64.ln()).abs() < 1e-15);
        let point = PosteriorState::from_probabilities(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(point.entropy(), 0.0);
        let s = PosteriorState::from_probabilities(&[0.9, 0.1]).unwrap();
        assert!((s.entropy() - 0.325083).abs() < 1e-6);
        assert!((s.entropy() - binary_entropy(0.1)).abs() < 1e-15);
    }

    #[test]
    fn log_odds_precision_near_one() {
        // Rest mass e^{-1400} is far below f64 resolution of p_j itself.
        let mut s = PosteriorState::uniform(3).unwrap();
        let enc = EncoderMap::binary(3, 0, 0, 1);
        let strong = Dmc::new(vec![vec![1.0 - 1e-300, 1e-300], vec![1e-300, 1.0 - 1e-300]]).unwrap();
        for _ in 0..2 {
            s.update(&enc, &strong, 0).unwrap();
        }
        let expected = 2.0 * (1.0f64 - 1e-300).ln() - 2.0 * 1e-300f64.ln() - 2f64.ln();
        assert!((s.log_odds(0) - expected).abs() < 1e-9 * expected);
        assert!(s.log_odds(0) > 1300.0);
    }

    #[test]
    fn drift_examples() {
        let dmc = bsc();
        let s = PosteriorState::uniform(2).unwrap();
        let flat = EncoderMap::constant(2, 0);
        assert!(exact_entropy_drift(&s, &flat, &dmc).unwrap().abs() < 1e-15);
        assert!(exact_log_entropy_drift(&s, &flat, &dmc).unwrap().abs() < 1e-15);
        assert!(exact_z_drift(&s, &flat, &dmc, 0, ObservationLaw::Predictive).unwrap().abs() < 1e-15);

        let split = EncoderMap::new(vec![0, 1]);
        let c = capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap().capacity;
        let d = exact_entropy_drift(&s, &split, &dmc).unwrap();
        assert!((d - c).abs() < 1e-9, "{d} vs {c}");
        assert!((d - 0.368064).abs() < 1e-6);

        let info = compute_info(&dmc);
        let s = PosteriorState::from_probabilities(&[0.99, 0.0025, 0.0025, 0.005]).unwrap();
        let enc = EncoderMap::binary(4, 0, info.x0, info.x0_prime);
        let d = exact_log_entropy_drift(&s, &enc, &dmc).unwrap();
        assert!(d <= 1.757780 + 1e-9);

        let dup = Dmc::new(vec![vec![0.7, 0.3], vec![0.7, 0.3]]).unwrap();
        assert!(exact_log_entropy_drift(&s, &EncoderMap::binary(4, 0, 0, 1), &dup).unwrap().abs() < 1e-15);
    }

    #[test]
    fn phase_two_drifts_are_b_and_minus_b_star() {
        for dmc in [bsc(), Dmc::new(vec![vec![0.95, 0.05], vec![0.2, 0.8]]).unwrap()] {
            let info = compute_info(&dmc);
            let s = PosteriorState::from_probabilities(&[0.1, 0.7, 0.15, 0.05]).unwrap();
            let enc = EncoderMap::binary(4, 1, info.x0, info.x0_prime);
            let h0 = exact_z_drift(&s, &enc, &dmc, 1, ObservationLaw::Message(1)).unwrap();
            let h1 = exact_z_drift(&s, &enc, &dmc, 1, ObservationLaw::Message(2)).unwrap();
            assert!((h0 - info.b).abs() < 1e-9);
            assert!((h1 + info.b_star).abs() < 1e-9);
        }
    }

    #[test]
    fn drift_errors() {
        let dmc = bsc();
        let point = PosteriorState::from_probabilities(&[1.0, 0.0]).unwrap();
        let enc = EncoderMap::new(vec![0, 1]);
        assert_eq!(exact_log_entropy_drift(&point, &enc, &dmc), Err(PosteriorError::ZeroEntropy));
        assert_eq!(
            exact_z_drift(&point, &enc, &dmc, 0, ObservationLaw::Predictive),
            Err(PosteriorError::InfiniteLogOdds(0))
        );
        let wide = Dmc::new(vec![vec![1.0 / 65.0; 65]; 2]).unwrap();
        let s = PosteriorState::uniform(2).unwrap();
        assert_eq!(
            exact_entropy_drift(&s, &enc, &wide),
            Err(PosteriorError::AlphabetTooLarge(65))
        );
    }

    #[test]
    fn normalization_survives_a_million_updates() {
        use rand::{Rng, SeedableRng};
        let dmc = Dmc::new(vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8]]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut s = PosteriorState::uniform(5).unwrap();
        for _ in 0..1_000_000 {
            let enc = EncoderMap::new((0..5).map(|_| rng.gen_range(0..3)).collect());
            let y = rng.gen_range(0..3);
            s.update(&enc, &dmc, y).unwrap();
        }
        assert!(logsumexp(s.log_posterior()).abs() < 1e-9);
    }

    fn state_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
        (2usize..8).prop_flat_map(|m| {
            (
                prop::collection::vec(0.001f64..1.0, m),
                prop::collection::vec(0usize..3, m),
            )
        })
    }

    proptest! {
        #[test]
        fn posterior_is_a_martingale((weights, map) in state_strategy()) {
            let dmc = Dmc::new(vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8]]).unwrap();
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let s = PosteriorState::from_probabilities(&probs).unwrap();
            let enc = EncoderMap::new(map);
            let mut mix = vec![0.0; probs.len()];
            for (_, p, next) in s.branches(&enc, &dmc) {
                for (m, q) in mix.iter_mut().zip(next.probabilities()) {
                    *m += p * q;
                }
            }
            for (a, b) in mix.iter().zip(&probs) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn log_odds_agrees_with_direct_formula((weights, _map) in state_strategy()) {
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let s = PosteriorState::from_probabilities(&probs).unwrap();
            for (j, p) in probs.iter().enumerate() {
                let direct = (p / (1.0 - p)).ln();
                prop_assert!((s.log_odds(j) - direct).abs() < 1e-9 * direct.abs().max(1.0));
            }
        }
    }
}
