//! Closed-form and brute-force oracles for every module.

use approx::{assert_abs_diff_eq, assert_relative_eq};
use finsler_pohozaev::field::{
    gradient, weak_residual, Bubble, ConstantSource, ManufacturedSource, PowerSource, SmoothField,
};
use finsler_pohozaev::pohozaev::{
    classical_plap_form, critical_exponent, dirichlet_boundary_reduction, identity_sides,
    nonexistence_scan, wholespace_check,
};
use finsler_pohozaev::profile::{default_bounds_grid, log_grid};
use finsler_pohozaev::solver::{energy, solve_dirichlet, torsion_oracle};
use finsler_pohozaev::*;
use nalgebra::{Matrix2, Vector2};
use std::f64::consts::{PI, SQRT_2, TAU};
use std::sync::Arc;

fn disk(n: usize) -> Arc<StarDomain> {
    Arc::new(StarDomain::with_resolution(RadiusFn::disk(1.0), n).unwrap())
}

fn diag21() -> Anisotropy {
    Anisotropy::ellipsoidal_row_major(2, &[2.0, 0.0, 0.0, 1.0]).unwrap()
}

/// Tangential curvature of `{ξᵀAξ = 1}` by direct sampling, independent of
/// the library's Hessian.
fn brute_force_lambda(a: Matrix2<f64>, samples: usize) -> f64 {
    (0..samples)
        .map(|k| {
            let t = TAU * k as f64 / samples as f64;
            let w = Vector2::new(t.cos(), t.sin());
            let xi = w / (w.dot(&(a * w))).sqrt();
            let ax = a * xi;
            let v = Vector2::new(-ax.y, ax.x).normalize();
            // H = √(ξᵀAξ) = 1 on the sample, so D²H = A − (Aξ)(Aξ)ᵀ
            let hess = a - ax * ax.transpose();
            v.dot(&(hess * v))
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn euclidean_and_ellipsoidal_constants() {
    let e = Anisotropy::euclidean(2).unwrap().report(10_000, 7).unwrap();
    assert_abs_diff_eq!(e.lambda_hat, 1.0, epsilon = 1e-8);
    assert_abs_diff_eq!(e.c1_hat, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(e.c2_hat, 1.0, epsilon = 1e-12);

    let r = diag21().report(10_000, 7).unwrap();
    assert_abs_diff_eq!(r.c1_hat, 1.0, epsilon = 1e-8);
    assert_abs_diff_eq!(r.c2_hat, SQRT_2, epsilon = 1e-8);
    let brute = brute_force_lambda(Matrix2::new(2.0, 0.0, 0.0, 1.0), 10_000);
    assert_relative_eq!(r.lambda_hat, brute, max_relative = 1e-6);
    assert!(r.max_homogeneity_error <= 1e-10 && r.max_euler_error <= 1e-10);
}

#[test]
fn three_dimensional_euclidean_norm() {
    let r = Anisotropy::euclidean(3).unwrap().report(2_000, 3).unwrap();
    assert_abs_diff_eq!(r.lambda_hat, 1.0, epsilon = 1e-8);
    assert!(r.max_homogeneity_error <= 1e-12);
}

#[test]
fn profile_bounds() {
    let grid = default_bounds_grid();
    for p in [1.5, 2.0, 3.0, 4.5] {
        let b = Profile::power(p).unwrap().check_structural_bounds(&grid);
        assert!(b.pass);
        assert_relative_eq!(b.gamma_hat, 1.0, max_relative = 1e-12);
        assert_relative_eq!(b.upper_gamma_hat, 1.0, max_relative = 1e-12);
    }
    let reg = Profile::regularized(3.0, 1.0).unwrap();
    let b = reg.check_structural_bounds(&log_grid(1e-3, 1e3, 2_000));
    assert!(b.pass);
    assert!(b.gamma_hat >= 1.0 / SQRT_2 - 1e-12);
    assert!(b.upper_gamma_hat <= 1.0 + 1e-12);
}

#[test]
fn regularized_primitive_matches_quadrature() {
    let pr = Profile::regularized(3.5, 0.4).unwrap();
    for t in [0.01, 0.3, 2.0, 7.5] {
        let q = finsler_pohozaev::quadrature::integrate_adaptive(|s| pr.db(s), 0.0, t, 1e-13);
        assert_relative_eq!(pr.b(t), q, max_relative = 1e-10);
    }
}

#[test]
fn ellipse_area_perimeter_and_support() {
    let d = StarDomain::with_resolution(RadiusFn::Ellipse { a: 2.0, b: 1.0 }, 256).unwrap();
    assert_relative_eq!(d.area(), TAU, max_relative = 1e-12);
    assert_relative_eq!(d.integrate_volume(|_| 1.0), TAU, max_relative = 1e-10);
    assert_abs_diff_eq!(d.integrate_boundary(|_| 1.0), 9.688448, epsilon = 1e-6);
    let flux = d.integrate_boundary(|b| b.x.dot(&b.normal));
    assert_relative_eq!(flux, 2.0 * d.area(), max_relative = 1e-8);
    let shape = d.star_shape_classify();
    assert_eq!(shape.class, StarShapeClass::StrictlyStarShaped);
    assert_relative_eq!(shape.min_support, 1.0, max_relative = 1e-12);
}

#[test]
fn limacon_is_a_positive_polar_graph() {
    let d = StarDomain::with_resolution(RadiusFn::perturbed_disk(0.9, 1), 512).unwrap();
    let shape = d.star_shape_classify();
    assert_eq!(shape.class, StarShapeClass::StrictlyStarShaped);
    assert!(shape.min_support > 0.0);
}

#[test]
fn divergence_theorem_converges_at_second_order() {
    let field = |x: Vector2<f64>| Vector2::new(x.x * x.y.exp(), (x.x + 0.3).sin() * x.y * x.y);
    let div = |x: Vector2<f64>| x.y.exp() + 2.0 * (x.x + 0.3).sin() * x.y;
    let r = RadiusFn::perturbed_disk(0.15, 3);
    let errors: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let d = StarDomain::with_resolution(r.clone(), n).unwrap();
            let vol = d.integrate_volume(div);
            let bnd = d.integrate_boundary(|b| field(b.x).dot(&b.normal));
            (vol - bnd).abs() / bnd.abs()
        })
        .collect();
    let orders = finsler_pohozaev::quadrature::observed_orders(&[1.0, 0.5, 0.25], &errors);
    assert!(orders.iter().all(|&o| o >= 1.99), "{errors:?} {orders:?}");
}

#[test]
fn gradient_of_torsion_is_exact_to_discretization() {
    let u = GridField::sample(disk(64), &torsion_oracle(2.0, 2, 1.0).unwrap());
    let g = gradient(&u);
    let d = u.domain();
    let worst = (0..d.len())
        .map(|k| {
            let x = d.node(k / d.n_theta(), k % d.n_theta());
            (g.values()[k] + 0.5 * x).norm()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn torsion_identity_values() {
    let e = Anisotropy::euclidean(2).unwrap();
    let cases = [(2.0, PI / 4.0, 512), (3.0, PI * SQRT_2 / 3.0, 256)];
    for (p, exact, n) in cases {
        let pr = Profile::power(p).unwrap();
        let u = GridField::sample(disk(n), &torsion_oracle(p, 2, 1.0).unwrap());
        let r = identity_sides(&u, &ConstantSource::new(1.0), &pr, &e).unwrap();
        assert_relative_eq!(r.rhs, exact, max_relative = 1e-4);
        assert_relative_eq!(r.lhs, exact, max_relative = 1e-4);
    }
}

#[test]
fn classical_form_matches_generic_form() {
    let e = Anisotropy::euclidean(2).unwrap();
    for p in [2.0, 3.0] {
        let pr = Profile::power(p).unwrap();
        let u = GridField::sample(disk(128), &torsion_oracle(p, 2, 1.0).unwrap());
        let c = classical_plap_form(&u, &ConstantSource::new(1.0), &pr, &e).unwrap();
        assert!(c.termwise_gap <= 1e-12, "{}", c.termwise_gap);
    }
}

#[test]
fn dirichlet_reduction_on_zero_trace_fields() {
    let pr = Profile::power(2.0).unwrap();
    let b = Bubble::new(1.0, [1.0, 0.3, -0.2, 0.5, 0.1, -0.4]);
    let u = GridField::sample(disk(128), &b);
    let a = diag21();
    let src = ManufacturedSource::new(Arc::new(b), pr, a.clone());
    let r = dirichlet_boundary_reduction(&u, &src, &pr, &a).unwrap();
    assert!(r.power_gap.unwrap() <= 1e-10, "{:?}", r.power_gap);
    assert!(r.reduced_gap <= 1e-10);
}

#[test]
fn critical_exponent_table() {
    assert_eq!(critical_exponent(2.0, 3).unwrap(), 5.0);
    assert_eq!(critical_exponent(2.0, 4).unwrap(), 3.0);
    assert_eq!(critical_exponent(3.0, 4).unwrap(), 11.0);
    assert!(matches!(
        critical_exponent(2.0, 2),
        Err(PohozaevError::SupercriticalDimensionPair { .. })
    ));
}

#[test]
fn nonexistence_scan_power_prediction() {
    let d = StarDomain::with_resolution(RadiusFn::disk(1.0), 32).unwrap();
    let ts = log_grid(1e-3, 10.0, 50);
    for (p, a) in [(2.0, Anisotropy::euclidean(2).unwrap()), (3.0, diag21())] {
        let pr = Profile::power(p).unwrap();
        let r = nonexistence_scan(&PowerSource::new(1.0, 3.0), &pr, &a, &d, &ts, 64).unwrap();
        assert!(r.condition_holds);
        let pred = r.power_prediction.unwrap();
        assert!(pred >= 0.0);
        assert_relative_eq!(r.min_value, pred, max_relative = 1e-12);
    }
}

#[test]
fn energy_of_torsion_minimizer() {
    let pr = Profile::power(2.0).unwrap();
    let e = Anisotropy::euclidean(2).unwrap();
    let u = GridField::sample(disk(128), &torsion_oracle(2.0, 2, 1.0).unwrap());
    let src = ConstantSource::new(1.0);
    assert_relative_eq!(
        energy(&u, &src, &pr, &e).unwrap(),
        -PI / 16.0,
        max_relative = 1e-4
    );
    assert!(energy(&u.scaled(0.5), &src, &pr, &e).unwrap() > energy(&u, &src, &pr, &e).unwrap());
}

#[test]
fn ellipsoidal_torsion_weak_residual_vanishes() {
    let pr = Profile::power(2.0).unwrap();
    let a = diag21();
    let src = ConstantSource::new(1.0);
    let test_fn = |x: Vector2<f64>| (1.0 - x.norm_squared()) * (1.0 + 0.5 * x.x - 0.3 * x.y);
    let mut errors = Vec::new();
    for n in [32, 64, 128] {
        let d = disk(n);
        let r = solve_dirichlet(&src, &pr, &a, d.clone(), &SolverConfig::default()).unwrap();
        let phi = GridField::from_fn(d, test_fn);
        errors.push(weak_residual(&r.u, &src, &pr, &a, &phi).unwrap().abs());
    }
    let orders = finsler_pohozaev::quadrature::observed_orders(&[1.0, 0.5, 0.25], &errors);
    assert!(orders.iter().all(|&o| o >= 1.5), "{errors:?} {orders:?}");
}

#[test]
fn wholespace_bump_in_the_plane() {
    let pr = Profile::power(2.0).unwrap();
    let e = Anisotropy::euclidean(2).unwrap();
    let bump = finsler_pohozaev::field::RadialBump::new(1.0, 0.6);
    let w = wholespace_check(Arc::new(bump), &pr, &e, &[0.8, 1.0, 1.5], 256).unwrap();
    assert_eq!(w.rhs, 0.0);
    assert!(w.residual_rel <= 1e-3);
    assert!(w.decay.iter().all(|d| d.value == 0.0));
    assert!(bump.support_radius().unwrap() < 0.8);
}
