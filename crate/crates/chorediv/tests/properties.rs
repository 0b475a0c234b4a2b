mod common;

use chorediv::check::{verify_equilibrium, verify_exact, FloatTolerances};
use chorediv::enumerate::{enumerate_equilibria, solve_pattern, EnumerationLimits};
use chorediv::fixedpoint::{solve_observed, SolveOutcome, SolverConfig};
use chorediv::graph::{build_disutility_graph, check_condition1, check_conditions};
use chorediv::model::{normalize_prices, to_f64};
use chorediv::polymatrix::{build_polymatrix_instance, endpoint_prices, recover_strategy, verify_gadget_properties, PolymatrixGame};
use chorediv::{AnyCandidate, Instance, Market, Rational};
use common::{compliant_instance, equilibrium_at, mpb, price_grid, q, qr, rng};
use num_traits::Zero;
use proptest::prelude::*;
use rand::Rng;

fn enumerate(inst: &Instance, eps: &Rational) -> chorediv::enumerate::EquilibriumSet {
    enumerate_equilibria(inst, eps, EnumerationLimits::default()).expect("within the cap")
}

fn scaled_endowments(inst: &Instance, k: i64) -> Instance {
    let Market::Exchange { endowment } = &inst.market else { unreachable!() };
    let w = endowment.iter().map(|r| r.iter().map(|v| v * q(k)).collect()).collect();
    Instance::exchange(inst.tau.clone(), inst.disutility.clone(), w).unwrap()
}

fn scaled_row(inst: &Instance, agent: usize, k: i64) -> Instance {
    let Market::Exchange { endowment } = &inst.market else { unreachable!() };
    let mut d = inst.disutility.clone();
    for v in d[agent].iter_mut().flatten() {
        *v = &*v * q(k);
    }
    Instance::exchange(q(100), d, endowment.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn condition1_matches_set_structure(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (n, m) = (r.gen_range(1..=5), r.gen_range(1..=5));
        let inst = common::random_support(&mut r, n, m);
        let got = check_condition1(&build_disutility_graph(&inst)).passed();
        prop_assert_eq!(got, common::sets_identical_or_disjoint(&inst));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn enumerated_equilibria_are_sound(seed in any::<u64>()) {
        let inst = compliant_instance(&mut rng(seed), 3);
        let set = enumerate(&inst, &q(0));
        prop_assert!(!set.is_empty());
        for e in &set.equilibria {
            prop_assert!(verify_exact(&inst, &e.witness, &q(0)).unwrap().passed());
            prop_assert!(equilibrium_at(&inst, &e.ray));
            prop_assert_eq!(&normalize_prices(&e.witness.prices).unwrap(), &e.ray);
        }
    }

    #[test]
    fn grid_equilibria_are_found(seed in any::<u64>()) {
        let inst = compliant_instance(&mut rng(seed), 2);
        prop_assume!(inst.chores() <= 4);
        let set = enumerate(&inst, &q(0));
        for p in price_grid(inst.chores(), 4) {
            if !equilibrium_at(&inst, &p) {
                continue;
            }
            let pattern: Vec<Vec<usize>> = (0..inst.agents()).map(|i| mpb(&inst, i, &p)).collect();
            prop_assert!(solve_pattern(&inst, &q(0), &pattern).is_some());
            prop_assert!(set.feasible_patterns.contains(&pattern), "pattern {:?} missing", pattern);
        }
    }

    #[test]
    fn rays_ignore_scaling(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = compliant_instance(&mut r, 2);
        let base = enumerate(&inst, &q(0));
        prop_assert_eq!(enumerate(&scaled_endowments(&inst, 3), &q(0)).rays(), base.rays());
        let agent = r.gen_range(0..inst.agents());
        let rescaled = scaled_row(&inst, agent, 2);
        prop_assert_eq!(&enumerate(&rescaled, &q(0)).feasible_patterns, &base.feasible_patterns);
    }

    #[test]
    fn relaxing_clearing_only_adds_patterns(seed in any::<u64>()) {
        let inst = compliant_instance(&mut rng(seed), 2);
        let exact = enumerate(&inst, &q(0));
        let loose = enumerate(&inst, &qr(1, 10));
        for p in &exact.feasible_patterns {
            prop_assert!(loose.feasible_patterns.contains(p));
        }
        for e in &loose.equilibria {
            prop_assert!(verify_exact(&inst, &e.witness, &qr(1, 10)).unwrap().passed());
        }
    }

    #[test]
    fn solver_iterates_stay_in_the_domain(seed in any::<u64>()) {
        let inst = compliant_instance(&mut rng(seed), 3);
        prop_assert!(check_conditions(&inst).passed());
        let cfg = SolverConfig { max_iters: 3000, ..SolverConfig::default() };
        let mut worst = (0.0f64, 0.0f64, 0.0f64);
        let outcome = solve_observed(&inst, &cfg, |rep| {
            worst.0 = worst.0.max(rep.domain_error);
            let dip = rep
                .diagnostics
                .q
                .iter()
                .zip(&rep.before.prices)
                .map(|(q, p)| p - q)
                .fold(0.0, f64::max);
            worst.1 = worst.1.max(dip);
            worst.2 = worst.2.max(rep.diagnostics.max_column_sum());
        })
        .unwrap();
        prop_assert!(worst.0 <= 1e-9, "domain error {}", worst.0);
        prop_assert!(worst.1 == 0.0, "q fell below p by {}", worst.1);
        prop_assert!(worst.2 <= 1e-12, "column sum {}", worst.2);
        if let SolveOutcome::Converged { candidate, residual, .. } = outcome {
            prop_assert!(residual <= 1e-7);
            let report = verify_equilibrium(
                &inst,
                &AnyCandidate::Float(candidate),
                &Rational::zero(),
                FloatTolerances::uniform(1e-6),
            )
            .unwrap();
            prop_assert!(report.passed(), "{:?}", report.violations);
        }
    }
}

fn random_game(r: &mut impl Rng, n: usize) -> PolymatrixGame {
    let payoff = (0..2 * n)
        .map(|_| {
            (0..n)
                .flat_map(|_| {
                    let a = qr(r.gen_range(0..=6), 6);
                    let b = q(1) - &a;
                    [a, b]
                })
                .collect()
        })
        .collect();
    PolymatrixGame::new(payoff).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gadget_endpoints_recover_vertices(seed in any::<u64>(), n in 2usize..=3) {
        let mut r = rng(seed);
        let game = random_game(&mut r, n);
        let (inst, _) = build_polymatrix_instance(&game).unwrap();
        prop_assert!(check_conditions(&inst).passed());
        let low: Vec<bool> = (0..n).map(|_| r.gen()).collect();
        let p: Vec<f64> = endpoint_prices(&inst, &low).unwrap().iter().map(to_f64).collect();
        prop_assert!(verify_gadget_properties(&inst, Some(&p), 1e-9).unwrap().passed());
        let x = recover_strategy(&inst, &p, 1e-9).unwrap();
        for (i, &l) in low.iter().enumerate() {
            let want = if l { [1.0, 0.0] } else { [0.0, 1.0] };
            prop_assert!((x[2 * i] - want[0]).abs() < 1e-9 && (x[2 * i + 1] - want[1]).abs() < 1e-9, "{:?}", x);
        }
    }
}
