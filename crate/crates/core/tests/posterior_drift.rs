use proptest::prelude::*;

use vlf_core::capacity::{capacity, DEFAULT_MAX_ITER, DEFAULT_TOL};
use vlf_core::channel::{compute_info, ChannelInfo, Dmc};
use vlf_core::posterior::{
    exact_entropy_drift, exact_log_entropy_drift, truncated_log_entropy_drift, EncoderMap, PosteriorState,
};

fn channels() -> Vec<(Dmc, ChannelInfo, f64)> {
    [
        vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        vec![vec![0.95, 0.05], vec![0.2, 0.8]],
        vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8]],
    ]
    .into_iter()
    .map(|rows| {
        let dmc = Dmc::new(rows).unwrap();
        let r = capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let info = compute_info(&dmc).with_capacity(r.capacity, r.px_star);
        (dmc, info, r.capacity)
    })
    .collect()
}

fn state_and_map() -> impl Strategy<Value = (usize, Vec<f64>, Vec<usize>)> {
    (0usize..3, 2usize..10).prop_flat_map(|(ch, m)| {
        (
            Just(ch),
            prop::collection::vec(-30.0f64..0.0, m),
            prop::collection::vec(0usize..3, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    /// Entropy, log-entropy and truncated log-entropy drifts against `C`,
    /// `B` and `varphi(θ)` for arbitrary encoders.
    #[test]
    fn drift_bounds_hold_for_any_encoder((ch, logw, map) in state_and_map()) {
        let all = channels();
        let (dmc, info, c) = &all[ch];
        let k = dmc.input_size();
        let probs: Vec<f64> = logw.iter().map(|l| l.exp()).collect();
        let total: f64 = probs.iter().sum();
        let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
        let state = PosteriorState::from_probabilities(&probs).unwrap();
        let enc = EncoderMap::new(map.iter().map(|x| x % k).collect());

        prop_assert!(exact_entropy_drift(&state, &enc, dmc).unwrap() <= c + 1e-9);
        if state.entropy() > 0.0 {
            prop_assert!(exact_log_entropy_drift(&state, &enc, dmc).unwrap() <= info.b + 1e-9);
            let ln_t = info.t_ratio.ln();
            for f in [0.5, 1.0, 2.0] {
                let theta = f * ln_t;
                let lhs = truncated_log_entropy_drift(&state, &enc, dmc, theta).unwrap();
                prop_assert!(lhs <= info.varphi(theta).unwrap() + 1e-9, "theta {theta}: {lhs}");
            }
        }
    }
}
