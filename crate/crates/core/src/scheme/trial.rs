use rand::Rng;
use rayon::prelude::*;

use super::{Regime, SchemeError, SchemeParams};
use crate::channel::{ChannelInfo, Dmc};
use crate::posterior::{EncoderMap, PosteriorState};
use crate::rng::{stream, trial_seed, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Random partition by `P_X*`.
    One,
    /// Leader on `x0`, everyone else on `x0′`.
    Two,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub w_true: usize,
    pub decoded: Option<usize>,
    /// Channel uses summed over attempts.
    pub tau_total: u64,
    pub attempts: u32,
    pub error: bool,
    /// Step counts of the final attempt.
    pub phase1_len: u64,
    pub phase2_len: u64,
    /// Hit the safety horizon.
    pub aborted: bool,
    /// `ln(1 − p_decoded)` at the decision: the conditional error probability.
    pub log_cond_error: f64,
    /// `H(W | Y^τ)` in nats at the decision.
    pub final_entropy: f64,
    /// Case-2 attempts that reached phase 2 with the true message leading.
    pub h0_attempts: u32,
    /// Of those, the ones that fell to the abort threshold.
    pub h0_retransmits: u32,
    pub retransmits: u32,
}

impl TrialOutcome {
    fn pending(w_true: usize) -> Self {
        Self {
            w_true,
            decoded: None,
            tau_total: 0,
            attempts: 0,
            error: false,
            phase1_len: 0,
            phase2_len: 0,
            aborted: false,
            log_cond_error: f64::NAN,
            final_entropy: f64::NAN,
            h0_attempts: 0,
            h0_retransmits: 0,
            retransmits: 0,
        }
    }
}

/// What the scheme is about to do (or just did) at one channel use.
#[derive(Debug)]
pub struct StepContext<'s> {
    pub w_true: usize,
    pub attempt: u32,
    /// Channel uses completed within this attempt.
    pub n: u64,
    pub phase: Phase,
    pub j0: Option<usize>,
    pub state: &'s PosteriorState,
    pub map: &'s [usize],
}

/// Hooks for instrumenting trajectories; the unit type ignores everything.
pub trait TrialObserver {
    /// Before the update; `ctx.state` is the current posterior.
    fn before_step(&mut self, _ctx: &StepContext<'_>) {}
    /// After the update; `ctx.state` is the new posterior.
    fn after_step(&mut self, _ctx: &StepContext<'_>, _y: usize) {}
}

impl TrialObserver for () {}

/// Inverse-CDF sampler that never returns a zero-probability index.
#[derive(Debug, Clone)]
struct Cdf(Vec<f64>);

impl Cdf {
    fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last = probs.iter().rposition(|&p| p > 0.0).expect("distribution has mass");
        cdf[last..].iter_mut().for_each(|c| *c = 1.0);
        Self(cdf)
    }

    #[inline]
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.0.iter().position(|&c| u < c).unwrap_or(self.0.len() - 1)
    }
}

/// Assign every message independently to input `x` with probability `P_X*(x)`.
pub fn phase1_partition<R: Rng>(state: &PosteriorState, px_star: &[f64], rng: &mut R) -> EncoderMap {
    let cdf = Cdf::new(px_star);
    EncoderMap::new((0..state.messages()).map(|_| cdf.sample(rng)).collect())
}

/// A configured scheme ready to simulate trials.
#[derive(Debug, Clone)]
pub struct Scheme {
    dmc: Dmc,
    params: SchemeParams,
    x0: usize,
    x0_prime: usize,
    b_over_c: f64,
    input_cdf: Cdf,
    noise: Vec<Cdf>,
}

impl Scheme {
    pub fn new(dmc: &Dmc, info: &ChannelInfo, params: SchemeParams) -> Result<Self, SchemeError> {
        params.validate()?;
        let px = info.px_star.as_ref().ok_or(SchemeError::MissingCapacity)?;
        let capacity = info.capacity.ok_or(SchemeError::MissingCapacity)?;
        if px.len() != dmc.input_size() {
            return Err(SchemeError::InvalidParams(format!(
                "input law has {} entries, channel has {} inputs",
                px.len(),
                dmc.input_size()
            )));
        }
        Ok(Self {
            dmc: dmc.clone(),
            x0: info.x0,
            x0_prime: info.x0_prime,
            b_over_c: info.b / capacity,
            input_cdf: Cdf::new(px),
            noise: dmc.rows().map(Cdf::new).collect(),
            params,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn b_over_c(&self) -> f64 {
        self.b_over_c
    }

    pub fn dmc(&self) -> &Dmc {
        &self.dmc
    }

    pub fn with_log_eps(&self, log_eps: f64) -> Self {
        Self {
            params: self.params.with_log_eps(log_eps),
            ..self.clone()
        }
    }

    pub fn run_trial(&self, w_true: usize, seed: u64) -> TrialOutcome {
        self.run_trial_observed(w_true, seed, &mut ())
    }

    /// One transmission of `w_true`. Attempt `k` draws its partitions and
    /// channel noise from streams keyed by `(seed, k)`.
    pub fn run_trial_observed<O: TrialObserver>(&self, w_true: usize, seed: u64, observer: &mut O) -> TrialOutcome {
        let p = &self.params;
        assert!(w_true < p.messages, "message {w_true} outside 0..{}", p.messages);
        let mut out = TrialOutcome::pending(w_true);
        let mut map = vec![self.x0_prime; p.messages];
        for attempt in 0u32.. {
            out.attempts = attempt + 1;
            out.phase1_len = 0;
            out.phase2_len = 0;
            let mut partition_rng = stream(seed, attempt as u64, Stream::Partition);
            let mut noise_rng = stream(seed, attempt as u64, Stream::Noise);
            let mut state = PosteriorState::uniform(p.messages).expect("M >= 2 validated");
            let mut lead = state.argmax();
            let mut z_lead = state.log_odds(lead);
            // Case 2 commits to its phase-2 hypothesis.
            let mut committed: Option<usize> = None;
            let mut n = 0u64;
            loop {
                let j0 = match p.regime {
                    Regime::Case1 => (z_lead >= p.z0).then_some(lead),
                    Regime::Case2 => {
                        if committed.is_none() && z_lead >= p.z0 {
                            committed = Some(lead);
                            if lead == w_true {
                                out.h0_attempts += 1;
                            }
                            if n >= 1 && z_lead >= p.log_eps {
                                self.accept(&mut out, &state, lead);
                                return out;
                            }
                        }
                        committed
                    }
                };
                if out.tau_total >= p.n_max {
                    out.aborted = true;
                    return out;
                }
                let phase = match j0 {
                    Some(j) => {
                        map.fill(self.x0_prime);
                        map[j] = self.x0;
                        Phase::Two
                    }
                    None => {
                        for x in map.iter_mut() {
                            *x = self.input_cdf.sample(&mut partition_rng);
                        }
                        Phase::One
                    }
                };
                observer.before_step(&StepContext {
                    w_true,
                    attempt,
                    n,
                    phase,
                    j0,
                    state: &state,
                    map: &map,
                });
                let y = self.noise[map[w_true]].sample(&mut noise_rng);
                state
                    .update_unchecked(&map, &self.dmc, y)
                    .expect("the true message keeps positive posterior mass");
                n += 1;
                out.tau_total += 1;
                match phase {
                    Phase::One => out.phase1_len += 1,
                    Phase::Two => out.phase2_len += 1,
                }
                observer.after_step(
                    &StepContext {
                        w_true,
                        attempt,
                        n,
                        phase,
                        j0,
                        state: &state,
                        map: &map,
                    },
                    y,
                );

                match (p.regime, committed) {
                    (Regime::Case2, Some(j)) => {
                        let z = state.log_odds(j);
                        if z >= p.log_eps {
                            self.accept(&mut out, &state, j);
                            return out;
                        }
                        if z <= p.abort.expect("Case 2 has an abort threshold") {
                            out.retransmits += 1;
                            if j == w_true {
                                out.h0_retransmits += 1;
                            }
                            break;
                        }
                    }
                    _ => {
                        lead = state.argmax();
                        z_lead = state.log_odds(lead);
                        if p.regime == Regime::Case1 && z_lead >= p.log_eps {
                            self.accept(&mut out, &state, lead);
                            return out;
                        }
                    }
                }
            }
        }
        unreachable!("attempt counter exhausted")
    }

    fn accept(&self, out: &mut TrialOutcome, state: &PosteriorState, decoded: usize) {
        out.decoded = Some(decoded);
        out.error = decoded != out.w_true;
        out.log_cond_error = state.log_complement(decoded);
        out.final_entropy = state.entropy();
    }
}

/// Free-function form of [`Scheme::run_trial`].
pub fn run_trial(
    dmc: &Dmc,
    info: &ChannelInfo,
    params: &SchemeParams,
    w_true: usize,
    seed: u64,
) -> Result<TrialOutcome, SchemeError> {
    Ok(Scheme::new(dmc, info, params.clone())?.run_trial(w_true, seed))
}

/// Trials `0..trials` in parallel on the current rayon pool, returned in
/// index order. Trial `i` sends a uniformly drawn message under
/// `trial_seed(run_seed, i)`.
pub fn run_trials(scheme: &Scheme, trials: u64, run_seed: u64) -> Vec<TrialOutcome> {
    let m = scheme.params().messages;
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(run_seed, i);
            let w = stream(seed, 0, Stream::Message).gen_range(0..m);
            scheme.run_trial(w, seed)
        })
        .collect()
}
