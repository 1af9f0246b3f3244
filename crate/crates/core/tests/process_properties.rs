use proptest::prelude::*;

use vrjp_core::clocks::ClockBank;
use vrjp_core::coupling::check_restriction;
use vrjp_core::process::{simulate, ClockRule, InitialLocalTimes, Provenance, RunLimits, Trajectory, VertexSet};
use vrjp_core::stats::{ks_one_sample, wilson_interval};
use vrjp_core::weights::WeightFunction;

fn weight() -> impl Strategy<Value = WeightFunction> {
    prop_oneof![
        Just(WeightFunction::linear()),
        (0.5f64..3.0).prop_map(|a| WeightFunction::power(a).unwrap()),
        (0.1f64..1.5).prop_map(|a| WeightFunction::exp_shifted(a).unwrap()),
    ]
}

fn vertex_set() -> impl Strategy<Value = VertexSet> {
    prop_oneof![
        Just(VertexSet::FullLine),
        Just(VertexSet::HalfLinePlus),
        (-3i64..3, 1i64..6).prop_map(|(lo, len)| VertexSet::Segment { lo, hi: lo + len }),
    ]
}

fn rule() -> impl Strategy<Value = ClockRule> {
    prop_oneof![Just(ClockRule::Fresh), Just(ClockRule::Literal), Just(ClockRule::Accumulated)]
}

fn run(w: &WeightFunction, vset: &VertexSet, rule: ClockRule, seed: u64, horizon: f64) -> Trajectory {
    simulate(
        w,
        vset,
        &InitialLocalTimes::default(),
        rule,
        RunLimits { horizon: Some(horizon), max_jumps: Some(200_000) },
        ClockBank::new(seed),
        Provenance::default(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn time_is_conserved_and_the_skeleton_is_valid(
        w in weight(), vset in vertex_set(), rule in rule(), seed in any::<u64>(), horizon in 0.5f64..60.0
    ) {
        let t = run(&w, &vset, rule, seed, horizon);
        prop_assert!(t.validate().is_ok());
        let mut last = 0.0;
        for e in &t.events {
            prop_assert_eq!(e.from.abs_diff(e.to), 1);
            prop_assert!(vset.contains(e.from) && vset.contains(e.to));
            // sojourns shorter than one ulp of the clock leave equal times
            prop_assert!(e.tau >= last);
            last = e.tau;
        }
        let gained: f64 = t.final_local_times().values().map(|l| l - 1.0).sum();
        let horizon = t.horizon();
        prop_assert!((gained - horizon).abs() <= 1e-9 * horizon.max(1.0), "{} vs {}", gained, horizon);
    }

    #[test]
    fn equal_seeds_give_identical_paths(w in weight(), vset in vertex_set(), rule in rule(), seed in any::<u64>()) {
        let a = run(&w, &vset, rule, seed, 20.0);
        let b = run(&w, &vset, rule, seed, 20.0);
        prop_assert_eq!(a.events, b.events);
    }

    #[test]
    fn csv_export_round_trips_bit_for_bit(w in weight(), seed in any::<u64>()) {
        let t = run(&w, &VertexSet::FullLine, ClockRule::Fresh, seed, 15.0);
        let back = Trajectory::from_csv(&t.events_csv(), t.meta.clone()).unwrap();
        prop_assert_eq!(back.events.len(), t.events.len());
        for (x, y) in back.events.iter().zip(&t.events) {
            prop_assert_eq!(x.tau.to_bits(), y.tau.to_bits());
            prop_assert_eq!((x.from, x.to), (y.from, y.to));
        }
    }

    #[test]
    fn restriction_principle_on_random_segments(w in weight(), seed in any::<u64>(), top in 1i64..6) {
        let b = VertexSet::Segment { lo: 0, hi: top };
        let check = check_restriction(
            &w, &VertexSet::HalfLinePlus, &b, &InitialLocalTimes::default(), ClockRule::Accumulated, seed, 40.0,
        ).unwrap();
        prop_assert!(check.mismatch.is_none(), "{:?}", check.mismatch);
    }

    #[test]
    fn the_three_rules_agree_on_two_vertices(w in weight(), seed in any::<u64>()) {
        let vset = VertexSet::two_vertex();
        let fresh = run(&w, &vset, ClockRule::Fresh, seed, 30.0);
        prop_assert_eq!(&fresh.events, &run(&w, &vset, ClockRule::Literal, seed, 30.0).events);
        prop_assert_eq!(&fresh.events, &run(&w, &vset, ClockRule::Accumulated, seed, 30.0).events);
    }
}

#[test]
fn first_two_vertex_sojourn_is_standard_exponential() {
    let w = WeightFunction::power(2.0).unwrap();
    let firsts: Vec<f64> = (0..100_000u64)
        .map(|seed| {
            let t = simulate(
                &w,
                &VertexSet::two_vertex(),
                &InitialLocalTimes::default(),
                ClockRule::Fresh,
                RunLimits::jumps(1),
                ClockBank::new(seed),
                Provenance::default(),
            )
            .unwrap();
            t.events[0].tau
        })
        .collect();
    let r = ks_one_sample(&firsts, |x| 1.0 - (-x).exp(), 0.001).unwrap();
    assert!(!r.reject, "{r:?}");
}

#[test]
fn jump_direction_follows_neighbour_weights() {
    // from 0 with L(-1) = 2 and L(1) = 3: P(right) = w(3) / (w(2) + w(3))
    for w in [WeightFunction::linear(), WeightFunction::power(2.0).unwrap()] {
        let initial = InitialLocalTimes::uniform(1.0).with(-1, 2.0).with(1, 3.0);
        let n = 100_000;
        let right = (0..n as u64)
            .filter(|&seed| {
                let t = simulate(
                    &w,
                    &VertexSet::FullLine,
                    &initial,
                    ClockRule::Fresh,
                    RunLimits::jumps(1),
                    ClockBank::new(seed),
                    Provenance::default(),
                )
                .unwrap();
                t.events[0].to == 1
            })
            .count();
        let p = w.value(3.0) / (w.value(2.0) + w.value(3.0));
        let (lo, hi) = wilson_interval(right, n, 3.0);
        assert!(lo <= p && p <= hi, "{}: {right}/{n} vs {p}", w.name());
    }
}
