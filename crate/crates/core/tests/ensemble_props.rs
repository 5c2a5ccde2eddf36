use std::fs::File;

use proptest::prelude::*;

use coopsim_core::ensemble::{
    evaluate_on_ensemble, make_ensemble, oracle_on_ensemble, planted_dataset, record_dataset, ModeDataset,
};
use coopsim_core::netsim::{enumerate_modes, mode_label, Category, Strategy};
use coopsim_core::selection::synthetic::PlantedSegment;
use coopsim_core::selection::{Policy, PolicyParams};
use coopsim_core::topology::Topology;

fn labels(n: usize) -> Vec<String> {
    enumerate_modes(n).into_iter().map(|m| mode_label(Some(m))).collect()
}

fn planted(seed: u64) -> ModeDataset {
    let plants: Vec<PlantedSegment> = (0..4)
        .map(|t| {
            let mut fers = vec![0.3; 6];
            fers[t] = 0.02;
            fers[(t + 1) % 6] = 0.1;
            PlantedSegment { frames: 0, mode_fers: fers, direct_fer: 0.8 }
        })
        .collect();
    planted_dataset(&plants, &labels(3), 400, seed).unwrap()
}

const POLICIES: [Policy; 6] = [Policy::Brute, Policy::RandPick, Policy::Pwr2, Policy::Nrnm, Policy::Wrnm, Policy::Spa];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn samples_respect_dataset_bounds(seed in any::<u64>(), count in 1usize..20, transitions in 0usize..6, len in 1usize..=400) {
        let d = planted(1);
        let samples = make_ensemble(&d, count, transitions, len, seed).unwrap();
        prop_assert_eq!(samples.len(), count);
        for s in &samples {
            prop_assert_eq!(s.segments.len(), transitions + 1);
            for seg in &s.segments {
                prop_assert!(seg.topology < d.topologies.len());
                prop_assert_eq!(seg.rows.len(), len);
                prop_assert!(seg.rows.iter().all(|&r| r < d.frames));
                let mut rows = seg.rows.clone();
                rows.sort_unstable();
                rows.dedup();
                prop_assert_eq!(rows.len(), len);
            }
        }
    }

    #[test]
    fn replay_is_deterministic(seed in any::<u64>(), policy in 0usize..6) {
        let d = planted(2);
        let samples = make_ensemble(&d, 8, 4, 100, seed).unwrap();
        let again = make_ensemble(&d, 8, 4, 100, seed).unwrap();
        prop_assert_eq!(&samples, &again);
        let params = PolicyParams::default();
        let a = evaluate_on_ensemble(POLICIES[policy], &samples, &d, &params, seed).unwrap();
        let b = evaluate_on_ensemble(POLICIES[policy], &samples, &d, &params, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn oracle_dominates_every_policy() {
    let topologies = [
        Topology::from_snr("a", 1.0, &[100.0, 5.0, 2.0], &[3.0, 8.0, 30.0]).unwrap(),
        Topology::from_snr("b", 1.5, &[4.0, 60.0, 6.0], &[20.0, 3.0, 9.0]).unwrap(),
        Topology::from_snr("c", 0.5, &[8.0, 8.0, 40.0], &[8.0, 40.0, 4.0]).unwrap(),
    ];
    let d = record_dataset(&topologies, Strategy::Diqif, 2.0, 860, 31).unwrap();
    let samples = make_ensemble(&d, 100, 4, 172, 32).unwrap();
    let oracle = oracle_on_ensemble(&samples, &d).unwrap();
    for p in POLICIES {
        let r = evaluate_on_ensemble(p, &samples, &d, &PolicyParams::default(), 33).unwrap();
        assert!(oracle.avg_fer <= r.avg_fer, "{p}: {} < oracle {}", r.avg_fer, oracle.avg_fer);
    }
}

#[test]
fn ensemble_averages_settle_as_samples_double() {
    let d = planted(3);
    let params = PolicyParams::default();
    let small = evaluate_on_ensemble(Policy::Spa, &make_ensemble(&d, 200, 4, 100, 40).unwrap(), &d, &params, 41).unwrap();
    let large = evaluate_on_ensemble(Policy::Spa, &make_ensemble(&d, 400, 4, 100, 40).unwrap(), &d, &params, 41).unwrap();
    assert!((small.avg_fer - large.avg_fer).abs() < 2.0 * small.fer_std_error.max(large.fer_std_error));
    assert!((small.avg_switches - large.avg_switches).abs() < 2.0 * small.switches_std_error.max(large.switches_std_error));
}

#[test]
fn dataset_file_round_trip() {
    let d = record_dataset(&[Topology::from_snr("x", 1.0, &[5.0, 2.0], &[2.0, 5.0]).unwrap()], Strategy::Dif, 1.0, 50, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dataset.csv");
    d.write_csv(File::create(&path).unwrap()).unwrap();
    let back = ModeDataset::read_csv(File::open(&path).unwrap()).unwrap();
    assert_eq!(back, d);
    assert!(back.record(0, 0).iter().all(|c| matches!(c, Category::Direct | Category::Coop | Category::Failure)));
}
