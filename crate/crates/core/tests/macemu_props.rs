use std::fs::File;

use proptest::prelude::*;

use coopsim_core::macemu::{coop_mac_deliver, drop_rate, genie_route, throughput_proxy, MacPolicy, MacScenario, PathTrace, PathTraces};
use coopsim_core::netsim::Category;

fn category() -> impl Strategy<Value = Category> {
    prop_oneof![Just(Category::Direct), Just(Category::Coop), Just(Category::Failure)]
}

/// Paths of 1-2 hops, each hop with `attempts` recorded outcomes per packet.
fn paths(packets: usize, attempts: usize) -> impl Strategy<Value = PathTraces> {
    let hop = prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.3), attempts), packets);
    let path = prop::collection::vec(hop, 1..=2);
    prop::collection::vec(path, 1..=3).prop_map(|ps| PathTraces {
        paths: ps.into_iter().enumerate().map(|(i, hops)| PathTrace { label: format!("P{i}"), hops }).collect(),
    })
}

proptest! {
    #[test]
    fn delays_compose_from_airtimes(trace in prop::collection::vec(category(), 1..200), cap in 0u32..4) {
        let policy = MacPolicy { max_retx_coop: cap, ..MacPolicy::default() };
        let Ok(results) = coop_mac_deliver(trace, &policy) else { return Ok(()) };
        for r in &results {
            prop_assert!(r.attempts >= 1 && r.attempts <= cap + 1);
            let direct = (r.total_delay_us as i64 - 372 * r.attempts as i64) / (180 - 372);
            prop_assert!(direct == 0 || direct == 1, "{:?}", r);
            prop_assert_eq!(r.total_delay_us, 180 * direct as u64 + 372 * (r.attempts as u64 - direct as u64));
            prop_assert!(r.delivered || r.attempts == cap + 1);
        }
        prop_assert!((0.0..=1.0).contains(&drop_rate(&results)));
        let max = policy.payload_bits as f64 / (policy.airtime_direct_us as f64 * 1e-6);
        prop_assert!(throughput_proxy(&results, &policy) <= max + 1e-6);
    }

    #[test]
    fn genie_drops_no_more_than_any_path_choice(p in paths(4, 3)) {
        // Caps of 2 attempts per hop; enumerate every per-packet path choice.
        let policy = MacPolicy { max_retx_per_link: 1, ..MacPolicy::default() };
        let genie = genie_route(&p, &policy).unwrap();
        let genie_drops = genie.iter().filter(|r| !r.delivered).count();
        let n = p.paths.len();
        let mut best = usize::MAX;
        for choice in 0..n.pow(4) {
            let drops = (0..4)
                .filter(|&k| !p.send(choice / n.pow(k as u32) % n, k, &policy).0)
                .count();
            best = best.min(drops);
        }
        prop_assert_eq!(genie_drops, best);
        for r in &genie {
            prop_assert_eq!(r.total_delay_us, 180 * r.attempts as u64);
        }
    }
}

#[test]
fn scenario_path_traces_round_trip_through_a_file() {
    let policy = MacPolicy::default();
    let traces = MacScenario::relay_limited(30, 4).path_traces(&policy);
    traces.validate(&policy).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.csv");
    traces.write_csv(File::create(&path).unwrap()).unwrap();
    assert_eq!(PathTraces::read_csv(File::open(&path).unwrap()).unwrap(), traces);
}
