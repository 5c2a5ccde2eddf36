use proptest::prelude::*;

use coopsim_core::outage::{
    approx_capacity, best_subnetwork, cut_outage_analytic, cut_value, link_capacity, outage_monte_carlo,
    outage_upper_bound, Cut, OutageMethod, OutageQuery,
};
use coopsim_core::rng::stream;
use coopsim_core::topology::{db_to_linear, ChannelRealization, Topology};

fn realization(n: usize) -> impl Strategy<Value = ChannelRealization> {
    (0.0..20.0f64, prop::collection::vec(0.0..20.0f64, n), prop::collection::vec(0.0..20.0f64, n))
        .prop_map(|(h_sd2, h2, g2)| ChannelRealization { h_sd2, h2, g2 })
}

fn topology(max_relays: usize) -> impl Strategy<Value = Topology> {
    (1..=max_relays).prop_flat_map(|n| {
        (-5.0..15.0f64, prop::collection::vec(-5.0..15.0f64, n), prop::collection::vec(-5.0..15.0f64, n)).prop_map(
            move |(sd, sr, rd)| {
                let lin = |v: &[f64]| v.iter().map(|&x| db_to_linear(x)).collect::<Vec<_>>();
                Topology::from_snr("p", db_to_linear(sd), &lin(&sr), &lin(&rd)).unwrap()
            },
        )
    })
}

proptest! {
    #[test]
    fn adding_relays_never_lowers_capacity(c in realization(4), mask_a in 0u8..16, mask_b in 0u8..16) {
        let small: Vec<usize> = (0..4).filter(|&i| mask_a >> i & 1 == 1).collect();
        let big: Vec<usize> = (0..4).filter(|&i| (mask_a | mask_b) >> i & 1 == 1).collect();
        prop_assert!(approx_capacity(&c, &small) <= approx_capacity(&c, &big) + 1e-12);
    }

    #[test]
    fn capacity_is_min_over_cuts(c in realization(3), mask in 0u8..8) {
        let subset: Vec<usize> = (0..3).filter(|&i| mask >> i & 1 == 1).collect();
        let min_cut = Cut::enumerate(&subset)
            .iter()
            .map(|cut| cut_value(&c, cut, &subset).unwrap())
            .fold(f64::INFINITY, f64::min);
        prop_assert!((approx_capacity(&c, &subset) - min_cut).abs() < 1e-12);
        prop_assert!(approx_capacity(&c, &subset) >= 0.0);
    }

    #[test]
    fn single_relay_identity(c in realization(1)) {
        let expected = link_capacity(c.h_sd2).max(link_capacity(c.h2[0]).min(link_capacity(c.g2[0])));
        prop_assert_eq!(approx_capacity(&c, &[0]), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn union_bound_dominates_simulation(t in topology(3), rate in 0.25..3.0f64, seed in any::<u64>()) {
        let subset: Vec<usize> = (0..t.n_relays).collect();
        let q = OutageQuery::new(rate, subset).with_samples(20_000);
        let bound = outage_upper_bound(&t, &q).unwrap();
        let mc = outage_monte_carlo(&t, &q, &mut stream(seed, 0)).unwrap();
        prop_assert!((0.0..=1.0).contains(&bound));
        prop_assert!((0.0..=1.0).contains(&mc.estimate));
        prop_assert!(bound >= mc.estimate - 3.0 * mc.std_error, "bound {bound} vs {mc:?}");
    }

    #[test]
    fn halving_quadrature_tolerance_is_stable(t in topology(3), rate in 0.25..4.0f64, mask in 0u8..8) {
        let subset: Vec<usize> = (0..t.n_relays).collect();
        let omega: Vec<usize> = subset.iter().copied().filter(|&i| mask >> i & 1 == 1).collect();
        let cut = Cut::new(omega);
        let tol = 1e-6;
        let coarse = cut_outage_analytic(&t, &OutageQuery::new(rate, subset.clone()).with_rel_tol(tol), &cut).unwrap();
        let fine = cut_outage_analytic(&t, &OutageQuery::new(rate, subset).with_rel_tol(tol / 2.0), &cut).unwrap();
        prop_assert!((coarse - fine).abs() <= tol * coarse.max(fine) + 1e-15, "{coarse} vs {fine}");
    }

    #[test]
    fn larger_subnetworks_have_lower_simulated_outage(t in topology(3), rate in 0.25..3.0f64, seed in any::<u64>()) {
        // Common random numbers make the estimates monotone realization by realization.
        let m = OutageMethod::MonteCarlo { samples: 2_000, seed };
        let mut prev = 1.0;
        for k in 0..=t.n_relays {
            let best = best_subnetwork(&t, k, rate, &m).unwrap();
            prop_assert!(best.outage <= prev + 1e-12);
            prev = best.outage;
        }
    }
}
