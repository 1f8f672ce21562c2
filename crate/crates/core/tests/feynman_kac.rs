use scalar_closure::closure::{
    solve_shear_npoint, solve_white_closure, streamwise_axis, AxisSpec, ClosureGenerator, GridSpec, TimeScheme,
    TimeStepping,
};
use scalar_closure::feynman_kac::*;
use scalar_closure::fields::{field_by_name, make_field, FieldCatalogEntry};
use scalar_closure::ic::InitialCondition;
use scalar_closure::noise::{brownian_path_indexed, ou_path_indexed, strain_integral, OuParams, PathGrid};
use scalar_closure::Error;

fn problem(field: &str, g: f64, kappa: f64, ic: InitialCondition, t: f64) -> TransportProblem {
    TransportProblem::new(field_by_name(field).unwrap(), NoiseModel::White { g }, kappa, ic, t).unwrap()
}

#[test]
fn pure_diffusion_matches_heat_kernel() {
    let ic = InitialCondition::gaussian(vec![0.0, 0.0], 0.5);
    let p = problem("linear_shear", 0.0, 0.5, ic.clone(), 0.4);
    let path = brownian_path_indexed(PathGrid::covering(0.4, 40).unwrap(), 3, 0);
    let x = [0.3, -0.2];
    let est = solve_one_realization(&p, &NoisePath::White(path), &x, 40_000, 11).unwrap();
    let exact = ic.heat_solution(0.5, &x, 0.4);
    assert!((est.mean - exact).abs() < 3.0 * est.std_error, "{est:?} vs {exact}");

    // A single realization of the ensemble carries the particle statistics.
    let spec = EnsembleSpec::new(1, 20_000, 5).with_dt(0.01);
    let field = ensemble_mean(&p, &spec, &[x.to_vec()]).unwrap();
    assert!(field.std_error[0] > 0.0);
    assert!((field.mean[0] - exact).abs() < 3.0 * field.std_error[0]);
}

#[test]
fn fixed_strain_path_matches_characteristics() {
    // Exact solution for a Gaussian source of width w along one path: a Gaussian of
    // variance w² + 2κI in the Lagrangian coordinate x e^{−gB(t)}.
    let (g, kappa, t, w) = (1.0, 1.0, 0.5, 0.3);
    let grid = PathGrid::covering(t, 20_000).unwrap();
    let path = brownian_path_indexed(grid, 17, 4);
    let ic = InitialCondition::gaussian(vec![0.0], w);
    let p = problem("strain_1d", g, kappa, ic, t);
    let integral = strain_integral(&path, g);
    let bt = path.values[grid.n_steps()];
    let var = w * w + 2.0 * kappa * integral;
    for x in [0.0, 0.8] {
        let y = x * (-g * bt).exp();
        let exact = (-(y * y) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let est = solve_one_realization(&p, &NoisePath::White(path.clone()), &[x], 4000, 2).unwrap();
        assert!((est.mean - exact).abs() < 3.0 * est.std_error + 2e-3 * exact, "x={x}: {est:?} vs {exact}");
    }
}

#[test]
fn shear_without_diffusion_follows_characteristics() {
    let ic = InitialCondition::gaussian(vec![0.2, 0.1], 0.7);
    let t = 0.5;
    let grid = PathGrid::covering(t, 5000).unwrap();
    let (x, y) = (0.4, -0.6);

    let path = brownian_path_indexed(grid, 9, 2);
    let g = 1.3;
    let p = problem("linear_shear", g, 0.0, ic.clone(), t);
    let est = solve_one_realization(&p, &NoisePath::White(path.clone()), &[x, y], 1, 0).unwrap();
    let exact = ic.evaluate(&[x - g * y * path.values[grid.n_steps()], y]);
    assert!((est.mean - exact).abs() < 1e-12);

    let params = OuParams::new(2.0, 3.0).unwrap();
    let ou = ou_path_indexed(params, grid, 9, 2);
    let p = TransportProblem::new(field_by_name("linear_shear").unwrap(), NoiseModel::Ou(params), 0.0, ic.clone(), t).unwrap();
    let est = solve_one_realization(&p, &NoisePath::Ou(ou.clone()), &[x, y], 1, 0).unwrap();
    let exact = ic.evaluate(&[x - y * ou.integral(), y]);
    assert!((est.mean - exact).abs() < 1e-3, "{} vs {exact}", est.mean);
}

#[test]
fn strain_ensemble_matches_closure() {
    let (g, kappa, t) = (1.0, 1.0, 0.5);
    let ic = InitialCondition::gaussian(vec![0.0], 0.3);
    let gen = ClosureGenerator::white(kappa, g, field_by_name("strain_1d").unwrap()).unwrap();
    let grid = GridSpec::new(vec![AxisSpec::stretched(-200.0, 200.0, 801, 0.1)]);
    let pde = solve_white_closure(&gen, &ic, &grid, t, &TimeStepping::new(1e-3, TimeScheme::TrBdf2).with_richardson()).unwrap();

    let p = problem("strain_1d", g, kappa, ic, t);
    let spec = EnsembleSpec::new(4000, 100, 21).with_dt(0.02).with_extrapolation();
    let pts: Vec<Vec<f64>> = [-1.0, 0.0, 0.5, 1.5].iter().map(|&x| vec![x]).collect();
    let est = ensemble_mean(&p, &spec, &pts).unwrap();
    for (i, x) in pts.iter().enumerate() {
        let reference = pde.value_at(x);
        assert!((est.mean[i] - reference).abs() < 3.0 * est.std_error[i], "x={x:?}: {} ± {} vs {reference}", est.mean[i], est.std_error[i]);
    }
    assert_eq!(est.flagged, 0);
}

#[test]
fn shear_ensemble_matches_closure() {
    let (g, kappa, t) = (1.0, 0.5, 0.5);
    let ic = InitialCondition::gaussian(vec![0.0, 0.0], 0.6);
    let field = field_by_name("linear_shear").unwrap();
    let grid = GridSpec::new(vec![streamwise_axis(24.0, 96), AxisSpec::truncated(-8.0, 8.0, 161)]);
    let st = TimeStepping::new(1e-2, TimeScheme::CrankNicolson).with_richardson();
    let pde = solve_shear_npoint(g, kappa, 1, &field, &ic, &grid, t, &st).unwrap();

    let p = problem("linear_shear", g, kappa, ic, t);
    let spec = EnsembleSpec::new(2000, 100, 8).with_dt(0.05).with_extrapolation();
    let pts = vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![-0.7, 0.3], vec![1.0, -1.0]];
    let est = ensemble_mean(&p, &spec, &pts).unwrap();
    let reference: Vec<f64> = pts.iter().map(|x| pde.value_at(x)).collect();
    assert!(est.max_deviation(&reference) < 3.0 * est.pooled_std_error(), "{:?} vs {reference:?}", est.mean);
}

#[test]
fn correlator_reduces_to_heat_products_without_noise() {
    let ic = InitialCondition::gaussian(vec![0.0, 0.0], 0.5);
    let p = problem("cellular", 0.0, 0.2, ic.clone(), 0.5);
    let pts = vec![vec![0.1, 0.2], vec![-0.3, 0.4]];
    let spec = EnsembleSpec::new(50, 2000, 1).with_dt(0.05);
    let est = npoint_correlator_mc(&p, &pts, &spec).unwrap();
    let exact = ic.heat_solution(0.2, &pts[0], 0.5) * ic.heat_solution(0.2, &pts[1], 0.5);
    assert!((est.mean - exact).abs() < 3.0 * est.std_error, "{est:?} vs {exact}");

    let single = npoint_correlator_mc(&p, &pts[..1], &spec).unwrap();
    assert!((single.mean - ic.heat_solution(0.2, &pts[0], 0.5)).abs() < 3.0 * single.std_error);
}

#[test]
fn two_point_correlator_matches_lifted_closure() {
    let (g, kappa, t) = (1.0, 0.5, 0.4);
    let field = field_by_name("linear_shear").unwrap();
    let ic1 = InitialCondition::gaussian(vec![0.0, 0.0], 0.8);
    let pair = InitialCondition::gaussian(vec![0.0; 4], 0.8);
    let axes = vec![streamwise_axis(12.0, 24), AxisSpec::truncated(-8.0, 8.0, 41)];
    let grid = GridSpec::new([axes.clone(), axes].concat());
    let st = TimeStepping::new(1e-2, TimeScheme::CrankNicolson);
    let pde = solve_shear_npoint(g, kappa, 2, &field, &pair, &grid, t, &st).unwrap();
    let (a, b) = ([0.3, 0.5], [-0.4, -0.6]);
    let reference = pde.value_at(&[a[0], a[1], b[0], b[1]]);

    let p = problem("linear_shear", g, kappa, ic1, t);
    let spec = EnsembleSpec::new(3000, 50, 14).with_dt(0.05).with_extrapolation();
    let est = npoint_correlator_mc(&p, &[a.to_vec(), b.to_vec()], &spec).unwrap();
    assert!((est.mean - reference).abs() < 3.0 * est.std_error, "{est:?} vs {reference}");
}

#[test]
fn dispersion_recovers_molecular_and_shear_rates() {
    let still = make_field(&FieldCatalogEntry::Cellular { oscillation: None }).unwrap();
    let spec = EnsembleSpec::new(20, 500, 4).with_dt(0.01);
    let est = effective_dispersion_mc(&still, 0.0, 4.0, &spec).unwrap();
    for (e, target) in [(0, 1.0), (3, 1.0)] {
        assert!((est.rate[e] - target).abs() < 0.05, "{est:?}");
    }

    let shear = field_by_name("sine_shear").unwrap();
    let spec = EnsembleSpec::new(20, 500, 6).with_dt(0.01).with_extrapolation();
    let est = effective_dispersion_mc(&shear, 1.0, 4.0, &spec).unwrap();
    assert!((est.rate[0] / 1.5 - 1.0).abs() < 0.05, "{est:?}");
    assert!((est.rate[3] - 1.0).abs() < 0.05, "{est:?}");
}

#[test]
fn cellular_dispersion_matches_cell_problem() {
    // Cell-problem value at Pe = 1 with 64 modes.
    let lambda = 4.108650518;
    let cellular = field_by_name("cellular").unwrap();
    let spec = EnsembleSpec::new(20, 500, 8).with_dt(5e-4);
    let est = effective_dispersion_mc(&cellular, 1.0, 0.5, &spec).unwrap();
    for e in [0, 3] {
        assert!((est.rate[e] / lambda - 1.0).abs() < 4.0 * est.std_error[e] / lambda + 0.02, "{est:?}");
    }
}

#[test]
fn dispersion_rejects_unbounded_fields() {
    let spec = EnsembleSpec::new(4, 10, 0);
    assert!(effective_dispersion_mc(&field_by_name("strain").unwrap(), 1.0, 1.0, &spec).is_err());
    assert!(effective_dispersion_mc(&field_by_name("cellular").unwrap(), 1.0, 1.0, &EnsembleSpec::new(1, 10, 0)).is_err());
}

#[test]
fn estimates_are_reproducible_and_seed_independent() {
    let ic = InitialCondition::gaussian(vec![0.0, 0.0], 0.5);
    let p = problem("cellular", 0.7, 0.3, ic, 0.3);
    let pts = vec![vec![0.0, 0.0], vec![0.25, 0.1], vec![0.5, 0.5]];
    let spec = EnsembleSpec::new(200, 40, 100).with_dt(0.01);
    let a = ensemble_mean(&p, &spec, &pts).unwrap();
    let b = ensemble_mean(&p, &spec, &pts).unwrap();
    assert_eq!(a, b);
    let c = ensemble_mean(&p, &EnsembleSpec { base_seed: 200, ..spec }, &pts).unwrap();
    for i in 0..pts.len() {
        let se = (a.std_error[i].powi(2) + c.std_error[i].powi(2)).sqrt();
        assert!((a.mean[i] - c.mean[i]).abs() < 3.0 * se);
    }
    assert!(a.to_csv().starts_with("x0,x1,mean,stderr\n"));
}

#[test]
fn blown_up_particles_are_flagged() {
    let ic = InitialCondition::gaussian(vec![0.0], 1.0);
    let p = problem("strain_1d", 400.0, 1.0, ic, 4.0);
    let spec = EnsembleSpec::new(4, 20, 0).with_dt(1e-3);
    match ensemble_mean(&p, &spec, &[vec![1.0]]) {
        Err(Error::FlaggedSamples { flagged, .. }) => assert!(flagged > 0),
        other => panic!("expected flagged samples, got {other:?}"),
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let ic = InitialCondition::gaussian(vec![0.0, 0.0], 0.5);
    let f = field_by_name("linear_shear").unwrap();
    assert!(TransportProblem::new(f.clone(), NoiseModel::White { g: 1.0 }, -1.0, ic.clone(), 1.0).is_err());
    assert!(TransportProblem::new(f.clone(), NoiseModel::White { g: 1.0 }, 1.0, ic.clone(), 0.0).is_err());
    let p = TransportProblem::new(f, NoiseModel::White { g: 1.0 }, 1.0, ic, 1.0).unwrap();
    assert!(ensemble_mean(&p, &EnsembleSpec::new(0, 10, 0), &[vec![0.0, 0.0]]).is_err());
    assert!(ensemble_mean(&p, &EnsembleSpec::new(10, 10, 0), &[vec![0.0]]).is_err());
    let short = brownian_path_indexed(PathGrid::covering(0.5, 10).unwrap(), 0, 0);
    assert!(solve_one_realization(&p, &NoisePath::White(short), &[0.0, 0.0], 10, 0).is_err());
}

#[test]
fn default_step_follows_the_noise_rate() {
    assert_eq!(NoiseModel::White { g: 1.0 }.default_dt(), 1e-3);
    assert!((NoiseModel::White { g: 10.0 }.default_dt() - 1e-4).abs() < 1e-18);
    assert!((NoiseModel::Ou(OuParams::new(100.0, 1.0).unwrap()).default_dt() - 1e-4).abs() < 1e-18);
}
