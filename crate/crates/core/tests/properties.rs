use lrep::coupled::{coupled_rates, discrepancy_row, marginal_consistency_check, PairConfiguration};
use lrep::exact::{build_generator, Mode};
use lrep::lattice::{Boundary, Kernel, Offsets, SiteSpace};
use lrep::rates::{delta_rate, q_bar_rate, q_rate, rate_report, Configuration};
use lrep::simulate::{run_coupled, run_single, RngPlan};
use lrep::stats::{f_n, g_n, k_partition, partition_check};
use proptest::prelude::*;

fn law() -> impl Strategy<Value = Offsets> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|p| Offsets::nearest_neighbor(p).unwrap()),
        (0.1f64..1.0, 0.1f64..1.0, 0.1f64..1.0).prop_map(|(a, b, c)| {
            let s = a + b + c;
            Offsets::one_dim(&[(1, a / s), (-2, b / s), (3, c / s)]).unwrap()
        }),
    ]
}

fn kernel() -> impl Strategy<Value = Kernel> {
    (law(), 5usize..=10, any::<bool>()).prop_map(|(o, n, torus)| {
        let space = if torus { SiteSpace::ring(n) } else { SiteSpace::segment(0, n as i64 - 1, Boundary::OpenEscape) };
        Kernel::from_offsets(&space.unwrap(), &o).unwrap()
    })
}

fn bits(n: usize) -> impl Strategy<Value = Vec<bool>> {
    proptest::collection::vec(any::<bool>(), n)
}

fn kernel_and_conf() -> impl Strategy<Value = (Kernel, Configuration)> {
    kernel().prop_flat_map(|k| {
        let n = k.len();
        (Just(k), bits(n).prop_map(|b| Configuration::from_bits(&b)))
    })
}

fn kernel_and_pair() -> impl Strategy<Value = (Kernel, PairConfiguration)> {
    kernel().prop_flat_map(|k| {
        let n = k.len();
        (Just(k), bits(n), bits(n)).prop_map(|(k, a, b)| {
            (k, PairConfiguration::new(Configuration::from_bits(&a), Configuration::from_bits(&b)).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_below_q_bar((k, eta) in kernel_and_conf()) {
        for x in eta.occupied() {
            for y in eta.vacant() {
                prop_assert!(q_rate(&k, x, y, &eta).unwrap() <= q_bar_rate(&k, x, y, &eta).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn outcomes_of_one_ring_sum_to_one((k, eta) in kernel_and_conf()) {
        for x in eta.occupied() {
            let r = rate_report(&k, x, &eta).unwrap();
            prop_assert!((r.total() - 1.0).abs() < 1e-10, "total {}", r.total());
        }
    }

    #[test]
    fn more_particles_help_the_walk((k, eta) in kernel_and_conf(), extra in 0usize..10) {
        let z = extra % k.len();
        let bigger = { let mut b = eta.clone(); b.set(z, true); b };
        for x in eta.occupied() {
            prop_assert!(delta_rate(&k, x, &eta).unwrap() <= delta_rate(&k, x, &bigger).unwrap() + 1e-12);
            for y in bigger.vacant().filter(|&y| y != x) {
                prop_assert!(q_rate(&k, x, y, &eta).unwrap() <= q_rate(&k, x, y, &bigger).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn generator_rows_conserve_probability((k, _eta) in kernel_and_conf()) {
        prop_assume!(k.len() <= 8);
        let q = build_generator(&k, Mode::Single, None).unwrap();
        prop_assert!(q.row_sum_residual() < 1e-12);
    }

    #[test]
    fn discrepancy_functionals_are_ordered((k, pair) in kernel_and_pair()) {
        for x in pair.eta.occupied() {
            for d in discrepancy_row(&k, x, &pair).unwrap() {
                prop_assert!(d.a <= d.b + 1e-12 && d.b <= d.c + 1e-12, "{d:?}");
                prop_assert!(d.d <= d.b + 1e-12);
            }
        }
    }

    #[test]
    fn coupled_marginals_match_single_rates((k, pair) in kernel_and_pair()) {
        for x in (0..pair.len()).filter(|&x| pair.eta.get(x) && pair.xi.get(x)) {
            for y in pair.eta.vacant() {
                prop_assert!(marginal_consistency_check(&k, x, y, &pair).unwrap().max_abs() < 1e-10);
            }
            prop_assert!((coupled_rates(&k, x, &pair).unwrap().total() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn coupling_preserves_order((k, pair) in kernel_and_pair(), seed in any::<u64>()) {
        let lower = pair.product();
        let traj = run_coupled(&k, &PairConfiguration::new(lower, pair.eta.clone()).unwrap(), 3.0, &RngPlan::new(seed)).unwrap();
        for (_, a, b) in traj.states() {
            prop_assert!(a.le(&b));
        }
    }

    #[test]
    fn same_seed_same_trajectory((k, eta) in kernel_and_conf(), seed in any::<u64>()) {
        let a = run_single(&k, &eta, 2.0, &RngPlan::new(seed)).unwrap();
        let b = run_single(&k, &eta, 2.0, &RngPlan::new(seed)).unwrap();
        prop_assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn discrepancy_counts_grow_with_the_window(a in bits(15), b in bits(15)) {
        let space = SiteSpace::ring(15).unwrap();
        let pair = PairConfiguration::new(Configuration::from_bits(&a), Configuration::from_bits(&b)).unwrap();
        for n in 0..7 {
            prop_assert!(f_n(&space, &pair, n).unwrap() <= f_n(&space, &pair, n + 1).unwrap());
            prop_assert!(g_n(&space, &pair, n).unwrap() <= g_n(&space, &pair, n + 1).unwrap());
        }
    }

    #[test]
    fn k_partition_covers_the_window(n in 1usize..40, k in 1usize..90) {
        let blocks = k_partition(n, k).unwrap();
        prop_assert_eq!(blocks[0].0, -(n as i64));
        prop_assert_eq!(blocks.last().unwrap().1, n as i64);
        for w in blocks.windows(2) {
            prop_assert_eq!(w[1].0, w[0].1 + 1);
            prop_assert_eq!(w[0].1 - w[0].0, k as i64);
        }
        let last = blocks.last().unwrap();
        prop_assert!(last.1 - last.0 <= k as i64);
    }

    #[test]
    fn alternations_split_across_blocks(a in bits(21), b in bits(21), k in 1usize..12) {
        let space = SiteSpace::segment(-10, 10, Boundary::OpenEscape).unwrap();
        let pair = PairConfiguration::new(Configuration::from_bits(&a), Configuration::from_bits(&b)).unwrap();
        prop_assert!(partition_check(&space, &pair, 10, k).unwrap().holds());
    }
}
