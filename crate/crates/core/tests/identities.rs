use proptest::prelude::*;

use vrjp_core::clocks::{substream_seed, ExpStream};
use vrjp_core::coupling::{run_coupled_pair, two_vertex_path};
use vrjp_core::diagnostics::{compute_series, decomposition_residual, envelope_checks, pathwise_checks};
use vrjp_core::process::{RunLimits, Stop, TwoVertexChain};
use vrjp_core::stats::ks_two_sample;
use vrjp_core::weights::WeightFunction;

fn weight() -> impl Strategy<Value = WeightFunction> {
    prop_oneof![
        Just(WeightFunction::linear()),
        (0.5f64..3.0).prop_map(|a| WeightFunction::power(a).unwrap()),
        (0.1f64..1.5).prop_map(|a| WeightFunction::exp_shifted(a).unwrap()),
    ]
}

fn strong_weight() -> impl Strategy<Value = WeightFunction> {
    prop_oneof![
        (1.2f64..3.0).prop_map(|a| WeightFunction::power(a).unwrap()),
        (0.2f64..1.5).prop_map(|a| WeightFunction::exp_shifted(a).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coupled_pairs_are_strictly_ordered(w in weight(), seed in any::<u64>()) {
        let run = run_coupled_pair(&w, seed, 200, None).unwrap();
        prop_assert!(run.violations().is_empty(), "violations at {:?}", run.violations());
    }

    #[test]
    fn decomposition_and_pathwise_bounds_hold(w in weight(), seed in any::<u64>(), grid_points in 0usize..20) {
        let traj = two_vertex_path(&w, [1.0, 1.0], RunLimits::jumps(500), seed).unwrap();
        let grid: Vec<f64> = (0..grid_points).map(|k| traj.horizon() * k as f64 / 20.0).collect();
        let series = compute_series(&traj, &w, &grid).unwrap();
        let r = decomposition_residual(&series, &w).unwrap();
        prop_assert!(r.relative < 1e-8, "{:?}", r);
        let checks = pathwise_checks(&series, 4.0);
        prop_assert!(checks.pass(), "{:?}", checks);
    }

    #[test]
    fn envelope_bounds_hold_in_the_strong_regime(
        w in strong_weight(), seed in any::<u64>(), t in 0.0f64..30.0, len in 0.0f64..30.0
    ) {
        let traj = two_vertex_path(&w, [1.0, 1.0], RunLimits::horizon(t + len + 1.0), seed).unwrap();
        let e = envelope_checks(&traj, &w, t, t + len).unwrap();
        prop_assert!(e.pass, "{:?}", e);
        prop_assert!(e.upper_slack.is_some());
    }
}

#[test]
fn ks_rejection_rate_is_calibrated_under_the_null() {
    let alpha = 0.01;
    let reps = 500;
    let rejections = (0..reps)
        .filter(|&k| {
            let mut a = ExpStream::from_seed(substream_seed(k, "x"));
            let mut b = ExpStream::from_seed(substream_seed(k, "y"));
            let xs: Vec<f64> = (0..400).map(|_| a.next_exp()).collect();
            let ys: Vec<f64> = (0..400).map(|_| b.next_exp()).collect();
            ks_two_sample(&xs, &ys, alpha).unwrap().reject
        })
        .count();
    let rate = rejections as f64 / reps as f64;
    assert!((0.002..=0.03).contains(&rate), "rejection rate {rate}");
}

#[test]
fn domination_ratio_vanishes_in_the_strong_regime() {
    // (W0 W1)^{-p/2} / int_{min L}^inf w^{-q} at the horizon, for (p, q) = (4, 3) and (2, 1)
    let w = WeightFunction::power(2.0).unwrap();
    let runs = 100;
    let mut small = [0usize; 2];
    for seed in 0..runs {
        let mut chain = TwoVertexChain::new(&w, [1.0, 1.0], substream_seed(seed, "ratio")).unwrap();
        assert_eq!(chain.advance(1e4, 2_000_000_000), Stop::Horizon);
        let [l0, l1] = chain.local_times();
        for (k, (p, q)) in [(4.0, 3.0), (2.0, 1.0)].into_iter().enumerate() {
            let ratio = (w.value(l0) * w.value(l1)).powf(-p / 2.0) / w.tail_integral_pow(l0.min(l1), q).unwrap();
            if ratio < 0.01 {
                small[k] += 1;
            }
        }
    }
    for s in small {
        assert!(s as f64 >= 0.95 * runs as f64, "{s} of {runs}");
    }
}
