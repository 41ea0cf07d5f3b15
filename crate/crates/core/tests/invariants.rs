use std::f64::consts::PI;

use proptest::prelude::*;
use rumheat::carleman::exponent_table;
use rumheat::grid::{make_cutoff, Interval, SpatialGrid, TimeGrid};
use rumheat::powers::{odd_root, signed_pow, signed_root};
use rumheat::rum::{solve_rum, RumOptions};
use rumheat::strategy::{even_complex_root, run_odd_strategy, PowerSystemConfig};
use rumheat::{
    Grids, HeatSolver, ParabolicOperator, RumProblem, Scheme, SpaceTimeField, WeightSystem,
};

fn grids(nx: usize, nt: usize) -> Grids {
    Grids::new(
        SpatialGrid::unit(nx).unwrap(),
        TimeGrid::new(1.0, nt).unwrap(),
    )
}

fn sine_mix(g: &SpatialGrid, c: &[f64]) -> Vec<f64> {
    g.sample(|x| {
        c.iter()
            .enumerate()
            .map(|(m, a)| a * ((m + 1) as f64 * PI * x).sin())
            .sum()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn odd_root_inverts_odd_power(x in -1e6f64..1e6, k in 0u32..4) {
        let n = 2 * k + 1;
        let r = odd_root(x, n);
        prop_assert!((r.powi(n as i32) - x).abs() <= 8.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE));
        prop_assert_eq!(r.signum() * x.signum() >= 0.0, true);
    }

    #[test]
    fn signed_power_round_trip(x in -1e3f64..1e3, n in 1u32..7) {
        let y = signed_pow(signed_root(x, n), n);
        prop_assert!((y - x).abs() <= 16.0 * f64::EPSILON * x.abs().max(1e-300));
    }

    #[test]
    fn complex_even_root_squares_back(h in -1e3f64..1e3, k in 1u32..3) {
        let r = even_complex_root(h, k).unwrap();
        let back = r.powu(2 * k);
        prop_assert!((back.re - h).abs() <= 1e-12 * h.abs().max(1.0), "{} vs {}", back, h);
        prop_assert!(back.im.abs() <= 1e-12 * h.abs().max(1.0));
    }

    #[test]
    fn cutoff_plateau_and_support(r in 1u32..6, lo in 0.2f64..0.35, width in 0.3f64..0.45) {
        let g = SpatialGrid::unit(63).unwrap();
        let omega = Interval::new(lo, lo + width);
        let inner = Interval::new(lo + 0.3 * width, lo + 0.7 * width);
        let c = make_cutoff(&g, omega, inner, r).unwrap();
        for i in 0..g.nx() {
            let x = g.x(i);
            if inner.contains_closed(x) {
                prop_assert_eq!(c.chi[i], 1.0);
            }
            if !omega.contains(x) {
                prop_assert_eq!(c.chi[i], 0.0);
            }
            prop_assert!((c.chi[i] - c.sigma[i].powi(r as i32)).abs() <= 1e-15);
            prop_assert!((0.0..=1.0).contains(&c.chi[i]));
        }
    }

    #[test]
    fn operator_inverts_stepping(seed in any::<u64>(), cn in any::<bool>()) {
        let g = grids(31, 32);
        let scheme = if cn { Scheme::CrankNicolson } else { Scheme::ImplicitEuler };
        let solver = HeatSolver::new(&ParabolicOperator::heat(31), &g, scheme).unwrap();
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let u = SpaceTimeField::from_fn(33, 31, |_, _| next());
        let source = solver.apply_operator(&u).unwrap();
        let back = solver.forward(u.row(0), &source).unwrap();
        let err = back.data().iter().zip(u.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err <= 1e-9, "{}", err);
    }

    #[test]
    fn exponent_recursion(k in 1u32..40) {
        let t = exponent_table(1, k).unwrap();
        prop_assert_eq!(t.m, 4 * t.n0 + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn rum_control_support_and_monotone_history(
        c in proptest::collection::vec(-1.0f64..1.0, 3),
        k in 0u32..2,
        eps_exp in 1i32..6,
    ) {
        let g = grids(31, 64);
        let n = 2 * k + 1;
        let omega = Interval::new(0.3, 0.7);
        let omega1 = Interval::new(0.4, 0.6);
        let w = WeightSystem::build(&g, omega1, 1.0, 1.0, k).unwrap();
        let cutoff = make_cutoff(&g.space, omega, omega1, n).unwrap();
        let solver = HeatSolver::new(&ParabolicOperator::heat(31), &g, Scheme::ImplicitEuler).unwrap();
        let p = RumProblem::new(solver, w, cutoff.clone(), n, 10f64.powi(-eps_exp), sine_mix(&g.space, &c)).unwrap();
        let r = solve_rum(&p, &RumOptions::default()).unwrap();
        let h = r.control();
        for i in 0..g.nx() {
            if cutoff.chi[i] == 0.0 {
                for j in 0..=g.nt() {
                    prop_assert_eq!(h.get(j, i), 0.0);
                }
            }
            prop_assert_eq!(h.get(0, i), 0.0);
            prop_assert_eq!(h.get(g.nt(), i), 0.0);
        }
        for pair in r.history.windows(2) {
            prop_assert!(pair[1].j_value <= pair[0].j_value + 1e-12 * pair[0].j_value.abs());
        }
    }

    #[test]
    fn odd_strategy_continuous_at_midpoint(a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let g = grids(31, 64);
        let u0 = g.space.sample(|x| a * (PI * x).sin());
        let v0 = g.space.sample(|x| b * x * (1.0 - x));
        let config = PowerSystemConfig::new(3, g, u0, v0).unwrap();
        let r = run_odd_strategy(&config).unwrap();
        let mid = g.nt() / 2;
        prop_assert_eq!(r.u.row(mid), r.phase1.u.last_row());
        prop_assert_eq!(r.v.row(mid), r.phase1.v.last_row());
        prop_assert!(r.resimulation_defect <= 1e-10);
    }
}
