use super::*;
use crate::fields::{field_by_name, make_field, FieldCatalogEntry, ShearProfile};
use crate::ic::Profile;
use std::f64::consts::{PI, TAU};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn cn(dt: f64) -> TimeStepping {
    TimeStepping::new(dt, TimeScheme::CrankNicolson)
}

#[test]
fn zero_noise_is_heat_equation_on_the_torus() {
    let gen = ClosureGenerator::white(0.1, 0.0, field_by_name("cellular").unwrap()).unwrap();
    let ic = InitialCondition::Fourier { wavevector: vec![TAU, 2.0 * TAU] };
    let grid = GridSpec::new(vec![AxisSpec::periodic(1.0, 16), AxisSpec::periodic(1.0, 16)]);
    let t = 0.5;
    let sol = solve_white_closure(&gen, &ic, &grid, t, &cn(5e-3).with_richardson()).unwrap();
    let exact = sol.grid.sample(|x| ic.heat_solution(0.1, x, t));
    assert!(max_diff(&sol.values, &exact) < 1e-8);
}

#[test]
fn strain_delta_source_matches_closed_form() {
    let axis = AxisSpec::stretched(-1500.0, 1500.0, 799, 0.05);
    let st = TimeStepping::new(1e-3, TimeScheme::TrBdf2).with_richardson();
    let sol = strain_delta_closure(1.0, 1.0, 1.0, &axis, 0.04, &st).unwrap();
    let mut err = 0.0f64;
    for (i, &x) in sol.grid.axes[0].nodes().iter().enumerate() {
        if x.abs() <= 5.0 {
            err = err.max((sol.values[i] - strain_exact(x, 1.0, 1.0, 1.0).unwrap()).abs());
        }
    }
    assert!(err < 1e-6, "{err:e}");
    // The closure creates mass at the rate g²/2.
    let mass = StrainSolution::new(1.0, 1.0).unwrap().mass(1.0);
    assert!((sol.integral() / mass - 1.0).abs() < 1e-5);
}

#[test]
fn truncated_window_must_contain_the_solution() {
    let gen = ClosureGenerator::white(1.0, 1.0, field_by_name("strain_1d").unwrap()).unwrap();
    let ic = InitialCondition::gaussian(vec![0.0], 0.3);
    let grid = GridSpec::new(vec![AxisSpec::truncated(-4.0, 4.0, 200)]);
    let err = solve_white_closure(&gen, &ic, &grid, 1.0, &cn(1e-2)).unwrap_err();
    assert!(matches!(err, crate::Error::BoundaryDecay { .. }), "{err}");
}

fn shear_axes(nx: usize, ny: usize) -> Vec<AxisSpec> {
    vec![streamwise_axis(24.0, nx), AxisSpec::truncated(-9.0, 9.0, ny)]
}

#[test]
fn fourier_reduction_matches_direct_two_dimensional_solve() {
    let f = field_by_name("linear_shear").unwrap();
    let ic = InitialCondition::Separable {
        factors: vec![Profile::Gaussian { center: 0.0, width: 1.5 }, Profile::Gaussian { center: 0.5, width: 0.6 }],
    };
    let grid = GridSpec::new(shear_axes(48, 41));
    let st = cn(1e-2);
    let reduced = solve_shear_npoint(0.8, 0.5, 1, &f, &ic, &grid, 0.5, &st).unwrap();
    let gen = ClosureGenerator::white(0.5, 0.8, f).unwrap();
    let direct = solve_white_closure(&gen, &ic, &grid, 0.5, &st).unwrap();
    assert!(max_diff(&reduced.values, &direct.values) < 1e-10, "{}", max_diff(&reduced.values, &direct.values));
}

#[test]
fn constant_shear_mode_decays_at_the_combined_rate() {
    let f = make_field(&FieldCatalogEntry::GeneralShear { profile: ShearProfile::constant(1.0) }).unwrap();
    let k = TAU;
    let ic = InitialCondition::Separable {
        factors: vec![Profile::Cosine { wavenumber: k }, Profile::Cosine { wavenumber: TAU }],
    };
    let grid = GridSpec::new(vec![AxisSpec::periodic(1.0, 8), AxisSpec::periodic(1.0, 16)]);
    let (g, kappa, t) = (0.7, 0.05, 0.8);
    let sol = solve_shear_npoint(g, kappa, 1, &f, &ic, &grid, t, &cn(1e-3).with_richardson()).unwrap();
    let rate = kappa * 2.0 * k * k + 0.5 * g * g * k * k;
    let exact = sol.grid.sample(|x| ic.evaluate(x) * (-rate * t).exp());
    assert!(max_diff(&sol.values, &exact) < 1e-8);
}

#[test]
fn two_point_without_noise_factorizes() {
    let f = field_by_name("linear_shear").unwrap();
    let one = GridSpec::new(vec![streamwise_axis(12.0, 16), AxisSpec::truncated(-9.0, 9.0, 27)]);
    let two = GridSpec::new([one.axes.clone(), one.axes.clone()].concat());
    let (a, b) = (InitialCondition::gaussian(vec![0.3, 0.0], 0.9), InitialCondition::gaussian(vec![-0.4, 0.2], 0.9));
    let pair = InitialCondition::gaussian(vec![0.3, 0.0, -0.4, 0.2], 0.9);
    let (t, st) = (0.4, cn(1e-2).with_richardson());
    let sa = solve_shear_npoint(0.0, 0.3, 1, &f, &a, &one, t, &st).unwrap();
    let sb = solve_shear_npoint(0.0, 0.3, 1, &f, &b, &one, t, &st).unwrap();
    let s2 = solve_shear_npoint(0.0, 0.3, 2, &f, &pair, &two, t, &st).unwrap();
    let m = sa.values.len();
    let mut err = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            err = err.max((s2.values[i * m + j] - sa.values[i] * sb.values[j]).abs());
        }
    }
    assert!(err < 1e-8 * s2.sup_norm(), "{err:e}");
    let four = GridSpec::new([two.axes.clone(), two.axes.clone()].concat());
    let quad = InitialCondition::gaussian(vec![0.0; 8], 0.9);
    assert!(solve_shear_npoint(0.0, 0.3, 4, &f, &quad, &four, t, &st).is_err());
}

#[test]
fn semigroup_property() {
    let gen = ClosureGenerator::white(0.2, 1.0, field_by_name("cellular").unwrap()).unwrap();
    let ic = InitialCondition::gaussian(vec![0.5, 0.5], 0.15);
    let grid = GridSpec::new(vec![AxisSpec::periodic(1.0, 12), AxisSpec::periodic(1.0, 12)]);
    let st = cn(1e-2);
    let whole = solve_white_closure(&gen, &ic, &grid, 0.3, &st).unwrap();
    let first = solve_white_closure(&gen, &ic, &grid, 0.1, &st).unwrap();
    let second = evolve_white_closure(&gen, &first, 0.1, 0.3, &st).unwrap();
    assert!(max_diff(&whole.values, &second.values) < 1e-12);
}

#[test]
fn discrete_generators_are_dissipative() {
    let cases = [
        (field_by_name("cellular").unwrap(), vec![AxisSpec::periodic(1.0, 8), AxisSpec::periodic(1.0, 8)]),
        (field_by_name("linear_shear").unwrap(), vec![AxisSpec::periodic(4.0, 8), AxisSpec::truncated(-2.0, 2.0, 9)]),
        (field_by_name("strain").unwrap(), vec![AxisSpec::truncated(-2.0, 2.0, 8), AxisSpec::stretched(-3.0, 3.0, 9, 1.0)]),
        (field_by_name("strain_1d").unwrap(), vec![AxisSpec::stretched(-50.0, 50.0, 40, 0.5)]),
    ];
    for (field, axes) in cases {
        let grid = GridSpec::new(axes).build().unwrap();
        let gen = ClosureGenerator::white(0.3, 1.2, field).unwrap();
        let a = white_operator(&gen, &grid, 0.0).unwrap().to_dense();
        let eig = a.complex_eigenvalues();
        let worst = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        assert!(worst < 1e-9 * a.norm(), "{}: max Re λ = {worst}", gen.field.name());
    }
}

#[test]
fn ou_without_flow_is_heat_equation() {
    let f = make_field(&FieldCatalogEntry::Constant { velocity: vec![0.0, 0.0] }).unwrap();
    let ic = InitialCondition::gaussian(vec![0.5, 0.5], 0.1);
    let grid = GridSpec::new(vec![AxisSpec::periodic(1.0, 16), AxisSpec::periodic(1.0, 16)]).with_hermite(4);
    let t = 0.05;
    let st = cn(1e-3).with_richardson();
    for gamma in [1.0, 50.0] {
        let gen = ClosureGenerator::ou(0.2, 1.0, gamma, f.clone()).unwrap();
        let sol = solve_ou_closure(&gen, &ic, &grid, t, &st).unwrap();
        let gen_w = ClosureGenerator::white(0.2, 0.0, f.clone()).unwrap();
        let heat = solve_white_closure(&gen_w, &ic, &GridSpec::new(grid.axes.clone()), t, &st).unwrap();
        assert!(max_diff(&sol.mean.values, &heat.values) < 1e-9 * heat.sup_norm(), "{}", max_diff(&sol.mean.values, &heat.values));
        assert!(sol.modes[1..].iter().all(|m| m.sup_norm() == 0.0));
    }
}

fn ou_shear_case(m: usize, gamma: f64) -> OuSolution {
    let f = field_by_name("linear_shear").unwrap();
    let ic = InitialCondition::Separable {
        factors: vec![Profile::Cosine { wavenumber: 1.0 }, Profile::Gaussian { center: 0.0, width: 0.5 }],
    };
    let grid = GridSpec::new(vec![AxisSpec::periodic(TAU, 8), AxisSpec::truncated(-10.0, 10.0, 99)]).with_hermite(m);
    let gen = ClosureGenerator::ou(1.0, 1.0, gamma, f).unwrap();
    solve_ou_shear(&gen, &ic, &grid, 0.5, &TimeStepping::new(5e-3, TimeScheme::TrBdf2)).unwrap()
}

#[test]
fn hermite_expansion_is_self_convergent() {
    let a = ou_shear_case(16, 20.0);
    let b = ou_shear_case(20, 20.0);
    assert!(max_diff(&a.mean.values, &b.mean.values) < 1e-8);
}

#[test]
fn under_resolved_hermite_order_is_refused() {
    let f = field_by_name("linear_shear").unwrap();
    let ic = InitialCondition::Separable {
        factors: vec![Profile::Cosine { wavenumber: 2.0 }, Profile::Gaussian { center: 0.0, width: 0.5 }],
    };
    let grid = GridSpec::new(vec![AxisSpec::periodic(PI, 8), AxisSpec::truncated(-10.0, 10.0, 99)]).with_hermite(4);
    let gen = ClosureGenerator::ou(1.0, 2.0, 2.0, f).unwrap();
    match solve_ou_shear(&gen, &ic, &grid, 0.5, &TimeStepping::new(5e-3, TimeScheme::TrBdf2)) {
        Err(crate::Error::HermiteTruncation { suggested, .. }) => assert!(suggested > 4),
        other => panic!("expected a truncation error, got {other:?}"),
    }
}

#[test]
fn fourier_ou_matches_real_space_ou() {
    // Same physics on a periodic sine shear through both OU paths.
    let f = make_field(&FieldCatalogEntry::GeneralShear { profile: ShearProfile::sine(1, 1.0) }).unwrap();
    let ic = InitialCondition::Separable {
        factors: vec![Profile::Cosine { wavenumber: TAU }, Profile::Cosine { wavenumber: TAU }],
    };
    let grid = GridSpec::new(vec![AxisSpec::periodic(1.0, 8), AxisSpec::periodic(1.0, 16)]).with_hermite(16);
    let gen = ClosureGenerator::ou(0.05, 0.5, 10.0, f).unwrap();
    let st = TimeStepping::new(2e-3, TimeScheme::TrBdf2);
    let a = solve_ou_shear(&gen, &ic, &grid, 0.2, &st).unwrap();
    let b = solve_ou_closure(&gen, &ic, &grid, 0.2, &st).unwrap();
    for n in 0..16 {
        assert!(max_diff(&a.modes[n].values, &b.modes[n].values) < 1e-10, "mode {n}");
    }
}

#[test]
fn ou_approaches_white_noise_as_damping_grows() {
    let f = field_by_name("linear_shear").unwrap();
    let ic = InitialCondition::Separable {
        factors: vec![Profile::Cosine { wavenumber: 1.0 }, Profile::Gaussian { center: 0.0, width: 0.5 }],
    };
    let axes = vec![AxisSpec::periodic(TAU, 8), AxisSpec::truncated(-10.0, 10.0, 99)];
    let st = TimeStepping::new(5e-3, TimeScheme::TrBdf2);
    let white = solve_shear_npoint(1.0, 1.0, 1, &f, &ic, &GridSpec::new(axes.clone()), 0.5, &st).unwrap();
    let errs: Vec<f64> = [10.0, 100.0]
        .iter()
        .map(|&gamma| {
            let gen = ClosureGenerator::ou(1.0, 1.0, gamma, f.clone()).unwrap();
            let sol = solve_ou_shear(&gen, &ic, &GridSpec::new(axes.clone()).with_hermite(14), 0.5, &st).unwrap();
            max_diff(&sol.mean.values, &white.values)
        })
        .collect();
    assert!(errs[1] < errs[0] / 5.0, "{errs:?}");
}

#[test]
fn time_periodic_field_uses_rebuilt_operators() {
    let f = make_field(&FieldCatalogEntry::Cellular {
        oscillation: Some(crate::fields::Oscillation { amplitude: 0.2, period: 0.5 }),
    })
    .unwrap();
    let gen = ClosureGenerator::white(0.2, 0.5, f).unwrap();
    let ic = InitialCondition::gaussian(vec![0.5, 0.5], 0.25);
    let grid = GridSpec::new(vec![AxisSpec::periodic(1.0, 12), AxisSpec::periodic(1.0, 12)]);
    let st = |dt| TimeStepping::new(dt, TimeScheme::TrBdf2);
    let a = solve_white_closure(&gen, &ic, &grid, 0.2, &st(1e-2)).unwrap();
    let b = solve_white_closure(&gen, &ic, &grid, 0.2, &st(5e-3)).unwrap();
    let c = solve_white_closure(&gen, &ic, &grid, 0.2, &st(2.5e-3)).unwrap();
    let ratio = max_diff(&a.values, &b.values) / max_diff(&b.values, &c.values);
    assert!((ratio - 4.0).abs() < 0.5, "{ratio}");
    // Mass is conserved for divergence-free fields on the torus.
    let m0 = ScalarField::new(a.grid.clone(), a.grid.sample(|x| ic.evaluate(x))).unwrap().integral();
    assert!((a.integral() - m0).abs() < 1e-10);
}
