use num_complex::Complex64;
use proptest::prelude::*;
use scalar_closure::closure::{
    evolve_white_closure, solve_white_closure, strain_exact, AxisSpec, ClosureGenerator, GridSpec, TimeScheme,
    TimeStepping,
};
use scalar_closure::fields::field_by_name;
use scalar_closure::gbm::{a_moment, dufresne_moment, inverse_moment_coth};
use scalar_closure::homogenize::{effective_tensor, npoint_tensor, shear_shortcut, solve_cell_problem, CellProblem};
use scalar_closure::ic::InitialCondition;
use scalar_closure::noise::{brownian_path_indexed, ou_path_indexed, OuParams, PathGrid};
use scalar_closure::propagator::{raw_wick_expansion, CMatrix, OperatorFamily};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn matrix(entries: &[f64], n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| Complex64::new(entries[i * n + j], 0.0))
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn path_grid_horizon_is_consistent(dt in 1e-4f64..1.0, n in 1usize..5000) {
        let g = PathGrid::new(dt, n).unwrap();
        prop_assert!((g.t_final() - dt * n as f64).abs() <= 4.0 * f64::EPSILON * g.t_final());
    }

    #[test]
    fn brownian_paths_start_at_zero_and_replay(seed in any::<u64>(), index in 0u64..1000, n in 1usize..200) {
        let g = PathGrid::new(0.01, n).unwrap();
        let p = brownian_path_indexed(g, seed, index);
        prop_assert_eq!(p.values[0], 0.0);
        let mut acc = 0.0;
        for (k, dv) in p.increments().enumerate() {
            acc += dv;
            prop_assert!((acc - p.values[k + 1]).abs() <= 1e-12 * (1.0 + acc.abs()));
        }
        prop_assert_eq!(&p, &brownian_path_indexed(g, seed, index));
    }

    #[test]
    fn ou_paths_replay(seed in any::<u64>(), gamma in 0.1f64..100.0, sigma in 0.0f64..10.0) {
        let g = PathGrid::new(0.01, 50).unwrap();
        let p = OuParams::new(gamma, sigma).unwrap();
        prop_assert_eq!(ou_path_indexed(p, g, seed, 3), ou_path_indexed(p, g, seed, 3));
    }

    #[test]
    fn divergence_free_fields_have_traceless_jacobians(x in -3.0f64..3.0, y in -3.0f64..3.0, t in 0.0f64..5.0) {
        for name in ["linear_shear", "strain", "cellular", "sine_shear"] {
            let f = field_by_name(name).unwrap();
            prop_assert!(f.divergence_free());
            prop_assert!(f.divergence(&[x, y], t).abs() <= 1e-12);
        }
    }

    #[test]
    fn periodic_fields_repeat(x in -3.0f64..3.0, y in -3.0f64..3.0, a in -3i32..3, b in -3i32..3) {
        for name in ["cellular", "sine_shear"] {
            let f = field_by_name(name).unwrap();
            let p = f.spatial_period().unwrap();
            let u = f.evaluate(&[x, y], 0.0);
            let v = f.evaluate(&[x + a as f64 * p[0], y + b as f64 * p[1]], 0.0);
            for (s, r) in u.iter().zip(&v) {
                prop_assert!((s - r).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn linear_fields_are_exact(x in -1e3f64..1e3, y in -1e3f64..1e3) {
        prop_assert_eq!(field_by_name("strain").unwrap().evaluate(&[x, y], 0.0), vec![x, -y]);
        prop_assert_eq!(field_by_name("linear_shear").unwrap().evaluate(&[x, y], 0.0), vec![y, 0.0]);
    }

    #[test]
    fn strain_solution_is_even_and_positive(x in 0.0f64..20.0, t in 0.05f64..3.0, kappa in 0.1f64..3.0, g in 0.0f64..2.0) {
        let p = strain_exact(x, t, kappa, g).unwrap();
        prop_assert_eq!(p, strain_exact(-x, t, kappa, g).unwrap());
        prop_assert!(p >= 0.0);
    }

    #[test]
    fn half_inverse_moment_scales_exactly(t in 0.2f64..8.0) {
        let m = a_moment(-0.5, 0.0, t).unwrap();
        prop_assert!((m.value * t.sqrt() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn inverse_moment_is_positive_and_decreasing(t in 0.1f64..20.0, dt in 0.01f64..5.0) {
        let a = inverse_moment_coth(t).unwrap().value;
        let b = inverse_moment_coth(t + dt).unwrap().value;
        prop_assert!(a > b && b > 0.0);
    }

    #[test]
    fn dufresne_matches_coth_at_minus_one(t in 0.2f64..10.0) {
        let d = dufresne_moment(-1.0, 0.0, t).unwrap().value;
        let c = inverse_moment_coth(t).unwrap().value;
        prop_assert!((d - 0.5 * c).abs() <= 1e-8 * c);
    }

    #[test]
    fn shear_shortcut_matches_closed_form(pe in 0.0f64..5.0) {
        let f = field_by_name("sine_shear").unwrap();
        let l = shear_shortcut(&f, pe).unwrap();
        prop_assert!((l.lambda[(0, 0)] - (1.0 + 0.5 * pe * pe)).abs() <= 1e-12 * (1.0 + pe * pe));
        prop_assert!(l.lambda[(0, 0)] >= 1.0);
    }
}

proptest! {
    #![proptest_config(cfg(16))]

    #[test]
    fn nonadjacent_pairings_vanish_exactly(
        c in prop::collection::vec(-1.0f64..1.0, 9),
        v in prop::collection::vec(-1.0f64..1.0, 9),
        t in 0.1f64..1.0,
        g in 0.1f64..2.0,
    ) {
        let fam = OperatorFamily::constant(matrix(&c, 3), matrix(&v, 3), g).unwrap();
        let w = raw_wick_expansion(&fam, t, 4).unwrap();
        prop_assert_eq!(w.max_nonadjacent, 0.0);
        prop_assert!(w.max_deviation <= 1e-12);
    }

    #[test]
    fn cell_solution_has_zero_mean_and_equivariant_blocks(pe in 0.1f64..3.0) {
        let cp = CellProblem::new(field_by_name("cellular").unwrap(), pe, 8, 0).unwrap();
        let sol = solve_cell_problem(&cp).unwrap();
        prop_assert_eq!(sol.mean(0).norm(), 0.0);
        prop_assert_eq!(sol.mean(1).norm(), 0.0);
        let single = effective_tensor(&cp, &sol).unwrap();
        prop_assert!(single.lambda[(0, 0)] >= 1.0);
        let block = npoint_tensor(&cp, &sol, 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(block.lambda[((i + 2) % 4, (j + 2) % 4)], block.lambda[(i, j)]);
            }
        }
    }

    #[test]
    fn torus_closure_conserves_mass_and_dissipates(
        kappa in 0.01f64..0.5,
        g in 0.0f64..2.0,
        cx in 0.0f64..1.0,
        cy in 0.0f64..1.0,
        k in 2usize..18,
    ) {
        let split = 0.01 * k as f64;
        let gen = ClosureGenerator::white(kappa, g, field_by_name("cellular").unwrap()).unwrap();
        let grid = GridSpec::new(vec![AxisSpec::periodic(1.0, 12), AxisSpec::periodic(1.0, 12)]);
        let ic = InitialCondition::gaussian(vec![cx, cy], 0.15);
        let st = TimeStepping::new(0.01, TimeScheme::CrankNicolson);
        let u0 = solve_white_closure(&gen, &ic, &grid, 0.0, &st).unwrap();
        let whole = solve_white_closure(&gen, &ic, &grid, 0.2, &st).unwrap();
        let first = solve_white_closure(&gen, &ic, &grid, split, &st).unwrap();
        let second = evolve_white_closure(&gen, &first, split, 0.2, &st).unwrap();
        prop_assert!((whole.integral() - u0.integral()).abs() <= 1e-12 * u0.integral());
        prop_assert!(first.l2_norm() <= u0.l2_norm() * (1.0 + 1e-14));
        prop_assert!(whole.l2_norm() <= first.l2_norm() * (1.0 + 1e-14));
        let semi = whole.values.iter().zip(&second.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(semi <= 1e-10, "semigroup defect {semi}");
    }
}
