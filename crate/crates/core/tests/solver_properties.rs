use plcmac_core::*;
use proptest::prelude::*;

fn tabled(cat: Category) -> Settings {
    let schedule = StageSchedule::preset(cat);
    Settings::default().with_kernel(Kernel::table(&schedule, kernel::DEFAULT_STEP).unwrap())
}

fn category() -> impl Strategy<Value = Category> {
    prop_oneof![Just(Category::Ca32), Just(Category::Ca10)]
}

#[test]
fn slot_probabilities_partition_unity() {
    for n in [1u32, 2, 7, 50, 200] {
        for tau in [0.0, 1e-6, 0.01, 0.3, 0.99, 1.0] {
            let sp = slot_probabilities::<f64>(tau, n);
            assert!((sp.success + sp.empty + sp.collision - 1.0).abs() < 1e-12);
            assert!(sp.collision >= -1e-15);
        }
    }
}

#[test]
fn converged_solutions_reproduce_their_inputs() {
    let settings = Settings::default();
    for cat in Category::ALL {
        for n in [2u32, 10, 50] {
            let sc = Scenario64::saturated(n, cat);
            for lambda in [None, Some(1.0), Some(20.0)] {
                let sc = match lambda {
                    Some(l) => sc.clone().with_rate(l),
                    None => sc.clone(),
                };
                let sol = solve_unsaturated(&sc, &settings).unwrap();
                assert!(sol.converged);
                assert!((sol.p - collision_prob(sol.tau, n)).abs() < 1e-12);
                assert!((sol.n_t - 1.0 / (1.0 - sol.p)).abs() < 1e-9 * sol.n_t);
                let (t_s, t_c) = frame_durations(&sc.timings);
                let x = service_time(sol.ew, sol.alpha, sol.n_t, t_s, t_c);
                assert!((x / sol.x - 1.0).abs() < 1e-9);
                assert!((sol.s - sol.rho * 12_000.0 / sol.x).abs() < 1e-9 * sol.s.max(1e-9));
                assert!(sol.rho >= 0.0 && sol.rho <= 1.0);
            }
        }
    }
}

#[test]
fn heavy_load_collapses_to_saturation() {
    let settings = Settings::default();
    for cat in Category::ALL {
        for n in [5u32, 20, 50] {
            let sc = Scenario64::saturated(n, cat);
            let sat = solve_saturated(&sc, &settings).unwrap();
            let heavy = solve_unsaturated(&sc.clone().with_rate(10.0 * sat.service_rate()), &settings).unwrap();
            assert_eq!(heavy.rho, 1.0);
            assert_eq!(heavy.idle, 0.0);
            assert!((heavy.s / sat.s - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn mu_sat_ordering_matches_simulation() {
    let settings = Settings::default();
    let ca32 = Scenario64::saturated(50, Category::Ca32);
    let ca10 = Scenario64::saturated(50, Category::Ca10);
    let (m32, m10) = (mu_sat(&ca32, &settings).unwrap(), mu_sat(&ca10, &settings).unwrap());
    assert!(m10 > m32);
    let s32 = run_sim(&ca32, 300.0, 0.0, 1).unwrap().per_node_rate();
    let s10 = run_sim(&ca10, 300.0, 0.0, 1).unwrap().per_node_rate();
    assert!(s10 > s32);
    assert!((s32 / m32 - 1.0).abs() < 0.05);
    assert!((s10 / m10 - 1.0).abs() < 0.05);
}

#[test]
fn light_branch_carries_offered_load() {
    let sc = Scenario64::saturated(50, Category::Ca32);
    let mu = mu_sat(&sc, &Settings::default()).unwrap();
    let set = find_solutions(&sc.with_rate(mu + 0.5), &Settings::default()).unwrap();
    assert_eq!(set.stability, Stability::Unstable);
    let light = set.branches.iter().find(|b| b.init_idle == 1000.0).unwrap();
    let light = light.outcome.as_ref().unwrap();
    assert!(light.rho < 1.0);
    assert!((light.s * 1e6 / 12_000.0 - (mu + 0.5)).abs() < 1e-6);
    assert_eq!(set.long_term().unwrap().rho, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn table_tracks_exact(cat in category(), n in 2u32..80, lambda in prop::option::of(0.5f64..60.0)) {
        let mut sc = Scenario64::saturated(n, cat);
        if let Some(l) = lambda {
            sc = sc.with_rate(l);
        }
        let a = solve_unsaturated(&sc, &Settings::default()).unwrap();
        let b = solve_unsaturated(&sc, &tabled(cat)).unwrap();
        prop_assert!((a.s / b.s - 1.0).abs() < 1e-6, "{} vs {}", a.s, b.s);
        prop_assert!((a.x / b.x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn saturated_throughput_falls_with_n(cat in category(), n in 1u32..120) {
        let s = Settings::default();
        let a = solve_saturated(&Scenario64::saturated(n, cat), &s).unwrap();
        let b = solve_saturated(&Scenario64::saturated(n + 1, cat), &s).unwrap();
        prop_assert!(b.aggregate_throughput(n + 1) <= a.aggregate_throughput(n) + 1e-9);
        prop_assert!(b.x > a.x);
    }

    #[test]
    fn below_half_capacity_is_single_and_stable(cat in category(), n in 2u32..60, frac in 0.05f64..0.5) {
        let sc = Scenario64::saturated(n, cat);
        let mu = mu_sat(&sc, &Settings::default()).unwrap();
        let set = find_solutions(&sc.with_rate(frac * mu), &Settings::default()).unwrap();
        prop_assert_eq!(set.stability, Stability::Stable);
        prop_assert_eq!(set.distinct_count(), 1);
    }
}
