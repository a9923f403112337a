use proptest::prelude::*;
use tetd_core::traces::{trace_window_recompute, Indexing, TraceConfig, TraceEngine, TraceMode};

/// `Σ_{j=0}^{min(n,t)} decayʲ (∏ρ) i_{t−j}` at the newest step.
fn direct_sum(stream: &[(f64, f64)], n: usize, decay: f64, indexing: Indexing) -> f64 {
    let t = stream.len() - 1;
    (0..=n.min(t))
        .map(|j| {
            let ratios: f64 = match indexing {
                Indexing::Prediction => stream[t - j..t].iter().map(|p| p.0).product(),
                Indexing::Control => stream[t - j + 1..=t].iter().map(|p| p.0).product(),
            };
            decay.powi(j as i32) * ratios * stream[t - j].1
        })
        .sum()
}

fn run(config: TraceConfig, stream: &[(f64, f64)]) -> Vec<f64> {
    let mut engine = TraceEngine::new(config).unwrap();
    stream.iter().map(|&(rho, i)| engine.push(rho, i)).collect()
}

fn indexing() -> impl Strategy<Value = Indexing> {
    prop_oneof![Just(Indexing::Prediction), Just(Indexing::Control)]
}

fn stream(max_len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..3.0f64, 0.1..2.0f64), 1..max_len)
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hard_trace_is_direct_summation(s in stream(200), n in 0usize..=32, gamma in 0.0..0.999f64, idx in indexing()) {
        let out = run(TraceConfig::new(TraceMode::Hard { n }, idx, gamma), &s);
        for t in 0..s.len() {
            let expected = direct_sum(&s[..=t], n, gamma, idx);
            prop_assert!(relative_gap(out[t], expected) < 1e-10, "t={} {} vs {}", t, out[t], expected);
        }
    }

    #[test]
    fn longer_windows_give_larger_traces(s in prop::collection::vec((0.05..3.0f64, 0.1..2.0f64), 1..100), n in 0usize..16, extra in 1usize..16, idx in indexing()) {
        let short = run(TraceConfig::new(TraceMode::Hard { n }, idx, 0.9), &s);
        let long = run(TraceConfig::new(TraceMode::Hard { n: n + extra }, idx, 0.9), &s);
        for t in 0..s.len() {
            prop_assert!(long[t] >= short[t]);
            if t > n {
                prop_assert!(long[t] > short[t]);
            }
        }
    }

    #[test]
    fn soft_at_gamma_equals_hard_before_truncation(s in stream(40), gamma in 0.01..0.99f64, idx in indexing()) {
        let n = s.len();
        let soft = run(TraceConfig::new(TraceMode::Soft { beta: gamma }, idx, gamma), &s);
        let hard = run(TraceConfig::new(TraceMode::Hard { n }, idx, gamma), &s);
        for (a, b) in soft.iter().zip(&hard) {
            prop_assert!(relative_gap(*a, *b) < 1e-12);
        }
    }

    #[test]
    fn history_older_than_the_window_is_irrelevant(
        s in prop::collection::vec((0.0..3.0f64, 0.1..2.0f64), 40..80),
        n in 0usize..20,
        noise in prop::collection::vec((0.0..3.0f64, 0.1..2.0f64), 40),
        idx in indexing(),
    ) {
        let t = s.len() - 1;
        let mut perturbed = s.clone();
        // Positions strictly older than t − n; in the prediction indexing the
        // ratio at t − n − 1 still links into the window, so only its
        // interest may change there.
        let cutoff = t - n;
        for (k, p) in perturbed.iter_mut().enumerate().take(cutoff) {
            let replacement = noise[k % noise.len()];
            if idx == Indexing::Prediction && k + 1 == cutoff {
                p.1 = replacement.1;
            } else {
                *p = replacement;
            }
        }
        let config = TraceConfig::new(TraceMode::Hard { n }, idx, 0.95);
        prop_assert_eq!(run(config, &s)[t], run(config, &perturbed)[t]);
    }

    #[test]
    fn window_kernel_agrees_with_engine(s in stream(60), n in 0usize..10, idx in indexing()) {
        let out = run(TraceConfig::new(TraceMode::Hard { n }, idx, 0.9), &s);
        let t = s.len() - 1;
        let start = t.saturating_sub(n);
        let direct = trace_window_recompute(&s[start..], 0.9, idx);
        prop_assert!(relative_gap(direct, out[t]) < 1e-12);
    }
}

#[test]
fn incremental_path_tracks_window_over_long_streams() {
    use rand::Rng;
    let mut rng = tetd_core::seeded_rng(3);
    for idx in [Indexing::Prediction, Indexing::Control] {
        for n in [0, 1, 4, 8] {
            let s: Vec<(f64, f64)> = (0..10_000)
                .map(|_| {
                    let rho = if rng.random::<f64>() < 0.05 { 0.0 } else { 2.0 * rng.random::<f64>() };
                    (rho, 0.5 + rng.random::<f64>())
                })
                .collect();
            let config = TraceConfig::new(TraceMode::Hard { n }, idx, 0.99);
            let window = run(config, &s);
            let incremental = run(config.incremental(), &s);
            for (a, b) in window.iter().zip(&incremental) {
                assert!(relative_gap(*a, *b) < 1e-9, "{a} vs {b}");
            }
        }
    }
}
