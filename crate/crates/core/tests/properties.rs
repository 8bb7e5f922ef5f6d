use std::num::NonZeroU32;
use std::sync::Arc;
use std::time::Instant;

use mlp_core::flows::sample_flow;
use mlp_core::harness::{relative_l2_error, run_experiment, ExperimentSpec};
use mlp_core::rng::{KeyCursor, KeyedSource, StreamSource, StreamTag};
use mlp_core::{builtin_problem, default_query, ExampleName, FixtureTable, FlowSpec, Mlp, MultiIndexKey};
use proptest::prelude::*;

#[test]
fn level_zero_f_contributes_no_value() {
    for name in ExampleName::ALL {
        let p = builtin_problem(name, 6).unwrap();
        let q = default_query(name, 6);
        for n in 1..=4 {
            let full = Mlp::new(&p, 3, q.r)
                .estimate(8, &MultiIndexKey::root(1), n, 0.0, &q.x)
                .unwrap();
            let ablated = Mlp::new(&p, 3, q.r)
                .level_zero_f(false)
                .estimate(8, &MultiIndexKey::root(1), n, 0.0, &q.x)
                .unwrap();
            assert_eq!(full, ablated, "{name} n={n}");
        }
    }
}

#[test]
fn level_zero_ablation_matters_when_f_does_not_vanish() {
    let mut p = builtin_problem(ExampleName::SineGordon, 3).unwrap();
    p.f = Arc::new(|_, y, out| out[0] = y[0].cos());
    let full = Mlp::new(&p, 2, default_query(ExampleName::SineGordon, 3).r)
        .estimate(8, &MultiIndexKey::root(1), 2, 0.0, &[0.0; 3])
        .unwrap();
    let ablated = Mlp::new(&p, 2, default_query(ExampleName::SineGordon, 3).r)
        .level_zero_f(false)
        .estimate(8, &MultiIndexKey::root(1), 2, 0.0, &[0.0; 3])
        .unwrap();
    assert_ne!(full.value, ablated.value);
    assert_eq!(full.counters, ablated.counters);
}

#[test]
fn euler_maruyama_matches_discrete_expectation() {
    // Explicit Euler on dX = X dt + X dW has E[X_N] = (1 + 1/N)^N exactly.
    let spec = FlowSpec::UnitDriftGbm.to_euler_maruyama(1, NonZeroU32::new(100).unwrap());
    let n = 1_000_000u64;
    let (mut sum, mut sq) = (0.0, 0.0);
    for j in 0..n {
        let mut s = KeyedSource.open(KeyCursor::new(77, j), StreamTag::Gaussian);
        let v = sample_flow(&spec, 1.0, &[1.0], 0.0, 1.0, &mut s).unwrap().state[0];
        sum += v;
        sq += v * v;
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    let target = 1.01f64.powi(100);
    assert!((mean - target).abs() < 3.0 * se, "mean {mean} target {target} se {se}");
}

#[test]
fn em_override_reaches_estimator() {
    let mut spec = ExperimentSpec::new(ExampleName::AllenCahn, vec![4], vec![2]);
    spec.reference = mlp_core::harness::ReferenceMode::SelfComputed { n_ref: 2, runs_ref: 1 };
    spec.runs = 1;
    let exact = run_experiment(&spec, &FixtureTable::builtin()).unwrap();
    spec.em_steps = NonZeroU32::new(20);
    let em = run_experiment(&spec, &FixtureTable::builtin()).unwrap();
    assert!(em[0].gaussian_scalars > exact[0].gaussian_scalars);
    assert_eq!(em[0].uniforms, exact[0].uniforms);
}

#[test]
fn timing_grows_with_n() {
    // Soft property: OS noise can reorder tiny timings, so only warn.
    let mut spec = ExperimentSpec::new(ExampleName::AllenCahn, vec![10], vec![4, 5]);
    spec.runs = 1;
    let start = Instant::now();
    let rows = run_experiment(&spec, &FixtureTable::builtin()).unwrap();
    let t4 = rows[0].runtime_seconds.unwrap();
    let t5 = rows[1].runtime_seconds.unwrap();
    if t5 <= t4 {
        eprintln!("warning: runtime n=5 ({t5}) not above n=4 ({t4})");
    }
    assert!(start.elapsed().as_secs() < 30);
}

#[test]
fn stored_error_recomputes_exactly() {
    let mut spec = ExperimentSpec::new(ExampleName::SemilinearBs, vec![10, 100], vec![1, 2, 3]);
    spec.workers = 3;
    for row in run_experiment(&spec, &FixtureTable::builtin()).unwrap() {
        assert_eq!(row.rel_l2_error, relative_l2_error(&row.realizations, &row.reference).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gaussian_count_linear_in_d(n in 0u32..4, m in 1u32..4, seed in any::<u64>(), ex in 0usize..4) {
        let name = ExampleName::ALL[ex];
        let count = |d: usize| {
            let p = builtin_problem(name, d).unwrap();
            let q = default_query(name, d);
            Mlp::new(&p, m, q.r).estimate(seed, &MultiIndexKey::root(0), n, 0.0, &q.x).unwrap().counters
        };
        let (small, large) = (count(3), count(30));
        prop_assert_eq!(large.gaussian_scalars, 10 * small.gaussian_scalars);
        prop_assert_eq!(large.uniforms, small.uniforms);
        prop_assert_eq!(large.flow_samples, small.flow_samples);
    }

    #[test]
    fn terminal_identity_any_seed(seed in any::<u64>(), root in any::<u64>(), n in 1u32..4, xs in prop::collection::vec(-3.0..3.0f64, 5)) {
        for name in ExampleName::ALL {
            let p = builtin_problem(name, 5).unwrap();
            let x: Vec<f64> = if name == ExampleName::SemilinearBs { xs.iter().map(|v| v.abs() + 0.1).collect() } else { xs.clone() };
            let est = Mlp::new(&p, n, default_query(name, 5).r)
                .estimate(seed, &MultiIndexKey::root(root), n, 1.0, &x)
                .unwrap();
            prop_assert_eq!(est.value, p.eval_g(&x));
        }
    }

    #[test]
    fn estimate_is_pure(seed in any::<u64>(), workers in 1usize..6, ex in 0usize..4) {
        let name = ExampleName::ALL[ex];
        let p = builtin_problem(name, 4).unwrap();
        let q = default_query(name, 4);
        let base = Mlp::new(&p, 3, q.r).estimate(seed, &MultiIndexKey::root(2), 3, 0.25, &q.x).unwrap();
        let again = Mlp::new(&p, 3, q.r).workers(workers).estimate(seed, &MultiIndexKey::root(2), 3, 0.25, &q.x).unwrap();
        prop_assert_eq!(base, again);
    }
}
