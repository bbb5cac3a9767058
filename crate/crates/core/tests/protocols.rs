use mutex_sim::metrics::{check_mutual_exclusion, client_delays, sync_delays};
use mutex_sim::scenario::{run, run_loaded, run_unloaded};
use mutex_sim::{Algorithm, Regime, ScenarioConfig};
use proptest::prelude::*;

fn checked(algorithm: Algorithm, regime: Regime, n: usize, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(algorithm, regime).nodes(n).seed(seed).trials(20);
    cfg.check_invariants = true;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_run_keeps_invariants(
        alg in prop::sample::select(Algorithm::ALL.to_vec()),
        regime in prop::sample::select(Regime::ALL.to_vec()),
        n in 2usize..40,
        seed in any::<u64>(),
        cs in prop::sample::select(vec![0.0, 3.0, 120.0]),
    ) {
        let mut cfg = checked(alg, regime, n, seed);
        cfg.cs_duration = cs;
        let result = run(&cfg).unwrap();
        prop_assert!(check_mutual_exclusion(&result.log).is_ok());
        prop_assert_eq!(result.samples.len(), 20);
        prop_assert!(result.samples.iter().all(|s| s.value >= 0.0));
        let log = &result.log;
        prop_assert!(log.exits().len() <= log.enters().len());
        prop_assert!(log.enters().len() <= log.requests().len());
    }
}

#[test]
fn loaded_ring_serves_in_ring_order() {
    let log = run_loaded(&checked(Algorithm::Ring, Regime::Loaded, 9, 4)).unwrap();
    let order: Vec<usize> = log.enters().iter().map(|e| e.node).collect();
    let expected: Vec<usize> = (0..order.len()).map(|k| k % 9).collect();
    assert_eq!(order, expected);
}

#[test]
fn loaded_central_grants_everyone_before_repeating() {
    let cfg = checked(Algorithm::Central, Regime::Loaded, 6, 11).trials(30);
    let log = run_loaded(&cfg).unwrap();
    let first: Vec<usize> = log.enters()[..6].iter().map(|e| e.node).collect();
    let mut sorted = first.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..6).collect::<Vec<_>>(), "{first:?}");
}

#[test]
fn raymond_liveness_on_larger_tree() {
    for seed in 0..5 {
        let cfg = checked(Algorithm::Raymond, Regime::Loaded, 31, seed).trials(200);
        let log = run_loaded(&cfg).unwrap();
        let mut served = [false; 31];
        for e in log.enters() {
            served[e.node] = true;
        }
        assert!(served.iter().all(|s| *s), "seed {seed}");
    }
}

#[test]
fn raymond_messages_bounded_by_tree_depth() {
    // unloaded request: at most `depth` requests up and `depth` token hops down, twice over
    let cfg = checked(Algorithm::Raymond, Regime::Unloaded, 63, 5).trials(40);
    let log = run_unloaded(&cfg).unwrap();
    let per_entry = log.messages_per_entry().unwrap();
    assert!(per_entry <= 2.0 * 2.0 * 5.0, "{per_entry}");
}

#[test]
fn metric_sample_counts() {
    let cfg = ScenarioConfig::new(Algorithm::Raymond, Regime::Unloaded).nodes(12).trials(17);
    assert_eq!(client_delays(&run_unloaded(&cfg).unwrap()).unwrap().len(), 17);
    let cfg = ScenarioConfig::new(Algorithm::Central, Regime::Loaded).nodes(12).trials(17);
    assert_eq!(sync_delays(&run_loaded(&cfg).unwrap()).unwrap().len(), 17);
}

#[test]
fn identical_config_identical_log() {
    for algorithm in Algorithm::ALL {
        let cfg = ScenarioConfig::new(algorithm, Regime::Loaded).nodes(25).seed(77);
        let a = serde_json::to_vec(&run_loaded(&cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&run_loaded(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
