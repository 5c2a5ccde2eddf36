use proptest::prelude::*;

use coopsim_core::netsim::{enumerate_modes, frame_outcome, run_fixed, Category, ScheduleRunner, Strategy as Coop};
use coopsim_core::outage::direct_outage;
use coopsim_core::selection::{run_policy, Policy, PolicyParams};
use coopsim_core::rng::stream;
use coopsim_core::stats::binomial_std_error;
use coopsim_core::topology::{ChannelRealization, FrameChannels, ScheduledNetwork, Segment, Topology, TopologySchedule};

fn realization(n: usize) -> impl Strategy<Value = ChannelRealization> {
    (0.0..8.0f64, prop::collection::vec(0.0..8.0f64, n), prop::collection::vec(0.0..8.0f64, n))
        .prop_map(|(h_sd2, h2, g2)| ChannelRealization { h_sd2, h2, g2 })
}

fn two_topologies() -> ScheduledNetwork {
    let a = Topology::from_snr("A", 1.0, &[10.0, 3.0, 1.0], &[2.0, 6.0, 8.0]).unwrap();
    let b = Topology::from_snr("B", 0.5, &[3.0, 9.0, 4.0], &[8.0, 2.0, 5.0]).unwrap();
    let schedule = TopologySchedule::new(vec![
        Segment { topology: "A".into(), frames: 120 },
        Segment { topology: "B".into(), frames: 80 },
        Segment { topology: "A".into(), frames: 50 },
    ])
    .unwrap();
    ScheduledNetwork::new(vec![a, b], schedule).unwrap()
}

proptest! {
    #[test]
    fn strategies_nest(c in realization(3), rate in 0.1..4.0f64) {
        for mode in std::iter::once(None).chain(enumerate_modes(3).into_iter().map(Some)) {
            let ok = |s| !frame_outcome(&c, mode, s, rate).category.is_error();
            prop_assert!(!ok(Coop::Dt) || ok(Coop::Dif));
            prop_assert!(!ok(Coop::Dif) || ok(Coop::Diqif));
        }
    }

    #[test]
    fn direct_success_is_category_zero(c in realization(2), rate in 0.1..4.0f64) {
        let direct = (1.0 + c.h_sd2).log2() >= rate;
        for s in [Coop::Dt, Coop::Dif, Coop::Diqif] {
            prop_assert_eq!(frame_outcome(&c, Some(enumerate_modes(2)[0]), s, rate).category == Category::Direct, direct);
        }
    }
}

#[test]
fn mode_enumeration_is_a_bijection() {
    for n in 1..=6 {
        let modes = enumerate_modes(n);
        assert_eq!(modes.len(), n + n * (n - 1) / 2);
        let mut labels: Vec<String> = modes.iter().map(ToString::to_string).collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), modes.len());
        assert!(modes.iter().all(|m| m.is_valid_for(n)));
        for m in &modes {
            assert_eq!(&m.to_string().parse::<coopsim_core::netsim::Mode>().unwrap(), m);
        }
    }
}

#[test]
fn category_zero_frequency_matches_direct_outage() {
    let t = Topology::from_snr("t", 3.0, &[5.0], &[5.0]).unwrap();
    let net = ScheduledNetwork::new(vec![t.clone()], TopologySchedule::constant("t", 50_000).unwrap()).unwrap();
    let rate = 1.5;
    let out = run_fixed(&net, Some(enumerate_modes(1)[0]), Coop::Diqif, rate, &FrameChannels::new(3)).unwrap();
    let hits = out.iter().filter(|o| o.category == Category::Direct).count() as f64 / out.len() as f64;
    let p = 1.0 - direct_outage(t.lambda_sd, rate);
    assert!((hits - p).abs() < 3.0 * binomial_std_error(p, out.len()), "{hits} vs {p}");
}

#[test]
fn schedule_runner_matches_fixed_runs() {
    let net = two_topologies();
    let channels = FrameChannels::new(77);
    let modes = enumerate_modes(3);
    for (i, &m) in modes.iter().enumerate() {
        let fixed = run_fixed(&net, Some(m), Coop::Diqif, 2.0, &channels).unwrap();
        let mut runner = ScheduleRunner::new(&net, Coop::Diqif, 2.0, channels);
        let log = run_policy(Policy::Fixed(i), &mut runner, modes.len(), &PolicyParams::default(), &mut stream(0, 0)).unwrap();
        let cats: Vec<Category> = log.frames.iter().map(|f| f.category).collect();
        assert_eq!(cats, fixed.iter().map(|o| o.category).collect::<Vec<_>>());
    }
}

#[test]
fn frame_channels_are_reproducible() {
    let net = two_topologies();
    let a = run_fixed(&net, None, Coop::Dt, 1.0, &FrameChannels::new(5)).unwrap();
    let b = run_fixed(&net, None, Coop::Dt, 1.0, &FrameChannels::new(5)).unwrap();
    let c = run_fixed(&net, None, Coop::Dt, 1.0, &FrameChannels::new(6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
