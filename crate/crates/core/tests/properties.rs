use proptest::prelude::*;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rwsre_core::branching::{nb_generation_step, quenched_mean_y, z_blocks, BranchingOptions};
use rwsre_core::environment::{
    rho, Coupling, EnvBlock, LambdaLaw, Mark, ModelSpec, SlowlyVarying, XiLaw,
};
use rwsre_core::heavytail::{build_normalizers, log_grid};
use rwsre_core::limitlaw::theta_cdf;
use rwsre_core::stats::{hill_index, ks_distance, EcdfSummary};
use rwsre_core::walk::{run_walk, WalkOptions};

fn spec_strategy() -> impl Strategy<Value = ModelSpec> {
    let xi = prop_oneof![
        (1u64..6).prop_map(|value| XiLaw::Constant { value }),
        (0.1f64..0.9).prop_map(|p| XiLaw::ShiftedGeometric { p }),
        Just(XiLaw::Pareto {
            slowly: SlowlyVarying::Const { c: 1.0 }
        }),
        (0.0f64..0.3).prop_map(|p| XiLaw::Pareto {
            slowly: SlowlyVarying::LogGrowing { p }
        }),
        (0.0f64..2.0).prop_map(|p| XiLaw::Pareto {
            slowly: SlowlyVarying::LogVanishing { p }
        }),
    ];
    let lambda = prop_oneof![
        (0.55f64..0.95).prop_map(|value| LambdaLaw::Constant { value }),
        (2.0f64..6.0, 0.5f64..2.0).prop_map(|(a, b)| LambdaLaw::Beta { a, b }),
    ];
    let coupling = prop_oneof![
        Just(Coupling::Independent),
        any::<bool>().prop_map(|comonotone| Coupling::RankCoupled { comonotone }),
    ];
    (xi, lambda, coupling, 0.3f64..1.0).prop_map(|(xi, lambda, coupling, beta)| ModelSpec {
        xi,
        lambda,
        coupling,
        beta,
        alpha_hint: None,
    })
}

fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_is_symmetric_and_bounded(a in sample_strategy(), b in sample_strategy()) {
        let (ea, eb) = (EcdfSummary::new(a.clone()), EcdfSummary::new(b));
        let d1 = ks_distance(&ea, &eb);
        let d2 = ks_distance(&eb, &ea);
        prop_assert_eq!(d1, d2);
        prop_assert!((0.0..=1.0).contains(&d1));
        prop_assert_eq!(ks_distance(&ea, &EcdfSummary::new(a)), 0.0);
    }

    #[test]
    fn ecdf_is_monotone_in_unit_interval(a in sample_strategy(), xs in prop::collection::vec(-60.0f64..60.0, 2..20)) {
        let e = EcdfSummary::new(a);
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let vals: Vec<f64> = xs.iter().map(|&x| e.eval(x)).collect();
        for w in vals.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(vals.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn hill_is_scale_invariant(raw in prop::collection::vec(1.0f64..1e6, 20..200), shift in -20i32..20, c in 0.01f64..100.0) {
        let k = raw.len() / 3;
        let base = hill_index(&raw, k).unwrap();
        // powers of two scale exactly in floating point
        let pow2: Vec<f64> = raw.iter().map(|x| x * 2f64.powi(shift)).collect();
        prop_assert_eq!(hill_index(&pow2, k).unwrap(), base);
        let scaled: Vec<f64> = raw.iter().map(|x| x * c).collect();
        let other = hill_index(&scaled, k).unwrap();
        prop_assert!((other / base - 1.0).abs() < 1e-9);
    }

    #[test]
    fn windows_extend_lazily_and_deterministically(spec in spec_strategy(), seed in any::<u64>(), a in 1i64..400, b in 1i64..400, neg in 1i64..300) {
        let mut first = EnvBlock::sample(spec, 1, a, seed).unwrap();
        let mut second = EnvBlock::new(spec, seed).unwrap();
        second.ensure_k_min(-neg);
        second.ensure_k_max(a.max(b));
        first.ensure_k_max(a.max(b));
        for k in 1..=a.max(b) {
            prop_assert_eq!(first.mark(k), second.mark(k));
            prop_assert_eq!(first.s(k), second.s(k));
        }
        for k in (-neg + 1)..=a.max(b) {
            let m = second.mark(k);
            prop_assert!(m.xi >= 1);
            prop_assert!(m.lambda > 0.0 && m.lambda < 1.0);
            prop_assert_eq!(second.s(k) - second.s(k - 1), m.xi as i64);
        }
        prop_assert_eq!(second.s(0), 0);
    }

    #[test]
    fn left_steps_account_for_passage_time(spec in spec_strategy(), seed in any::<u64>(), n in 1i64..64) {
        let mut env = EnvBlock::new(spec, seed).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let opts = WalkOptions { cap: 200_000, ..Default::default() };
        let w = run_walk(&mut env, n, &opts, &mut rng);
        if let Some(t) = w.t_n {
            prop_assert_eq!(t, n as u64 + 2 * w.left_steps);
            prop_assert!((t - n as u64) % 2 == 0);
        }
    }

    #[test]
    fn blocks_partition_exactly(spec in spec_strategy(), seed in any::<u64>()) {
        let mut env = EnvBlock::new(spec, seed).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for b in z_blocks(&mut env, 300, BranchingOptions::skipping(), &mut rng) {
            prop_assert_eq!(b.w_bar, b.w0 + b.w_down + b.z_sum);
            prop_assert!(b.tau_increment >= 1);
            prop_assert!(b.s_increment >= b.tau_increment);
        }
    }

    #[test]
    fn sure_drift_kills_every_generation(u in 0u128..1_000_000_000, seed in any::<u64>()) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        prop_assert_eq!(nb_generation_step(u, 1.0, &mut rng), 0);
    }

    #[test]
    fn correction_mean_matches_double_sum(
        marks in prop::collection::vec((1u64..5, 0.3f64..0.9), 1..6),
        n in 1i64..25,
    ) {
        let pos: Vec<Mark> = marks.iter().map(|&(xi, lambda)| Mark { xi, lambda }).collect();
        let mut env = EnvBlock::fixed(pos, vec![], Mark { xi: 3, lambda: 0.6 }).unwrap();
        let nu = env.nu(n);
        let s = env.s(nu - 1);
        let mut brute = 0.0;
        for j in 0..=s {
            for i in s..n {
                brute += (j..=i).map(|r| rho(env.omega(r))).product::<f64>();
            }
        }
        let closed = quenched_mean_y(&mut env, n);
        prop_assert!((closed - brute).abs() <= 1e-9 * brute.max(1.0));
    }

    #[test]
    fn theta_cdf_is_a_distribution_function(xs in prop::collection::vec(1e-4f64..50.0, 2..30)) {
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let v: Vec<f64> = xs.iter().map(|&x| theta_cdf(x)).collect();
        for w in v.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-15);
        }
        prop_assert!(v.iter().all(|p| (-1e-15..=1.0 + 1e-15).contains(p)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn normalizer_a_is_monotone(beta in 0.3f64..1.0, p in 0.0f64..0.3) {
        let spec = ModelSpec {
            xi: XiLaw::Pareto { slowly: SlowlyVarying::LogGrowing { p: p.min(beta) } },
            lambda: LambdaLaw::Constant { value: 0.7 },
            coupling: Coupling::Independent,
            beta,
            alpha_hint: None,
        };
        let tab = build_normalizers(&spec, Some(beta / 3.0), &log_grid(1.0, 1e9, 64)).unwrap();
        for w in tab.rows.windows(2) {
            prop_assert!(w[1].a >= w[0].a);
            prop_assert!(w[1].m >= w[0].m);
        }
    }
}
