//! First and second shape derivatives against closed forms and finite
//! differences.

use std::f64::consts::PI;
use std::sync::Arc;

use obstacle_core::bessel::RadialSolution;
use obstacle_core::functionals::{
    evaluate, inverse_crime_data, solve_forward, synthesize_data, CauchyData, DataProvenance, Problem, Resolution,
};
use obstacle_core::pde::NodalField;
use obstacle_core::shape_calculus::{
    log_concavity_defect, solve_adjoint, verify_gradient_fd, verify_gradient_fd_weighted, FdRegime, HessianParts,
    ShapeContext, Weights,
};
use obstacle_core::{BoundaryField, HoldAll, RadialShape, SobolevExponent};
use proptest::prelude::*;

fn ones(n: usize) -> BoundaryField {
    BoundaryField::constant(n, 1.0).unwrap()
}

fn concentric_problem(res: Resolution) -> (Problem, RadialShape) {
    let shape = RadialShape::circle_with_modes(0.5, 8).unwrap();
    let data = CauchyData::new(ones(res.n_theta), BoundaryField::zeros(res.n_theta).unwrap(), DataProvenance::default())
        .unwrap();
    (Problem::new(HoldAll::default(), data, res), shape)
}

fn synthetic_problem(truth: &RadialShape, res: Resolution) -> Problem {
    let domain = HoldAll::default();
    let data = synthesize_data(truth, &domain, &ones(res.n_theta), 0.0, 1, 2, res).unwrap();
    Problem::new(domain, data, res)
}

fn generic_shape(k: usize) -> RadialShape {
    let mut cos = vec![0.0; k];
    cos[1] = 0.1;
    RadialShape::new(0.5, cos, vec![0.0; k]).unwrap()
}

fn relative_nodal_error(ctx: &ShapeContext<'_>, field: &NodalField, exact: impl Fn(f64) -> f64) -> f64 {
    let sys = &ctx.state.system;
    let mesh = Arc::clone(sys.mesh());
    let reference = NodalField::interpolate(Arc::clone(&mesh), |p| exact(p[0].hypot(p[1]))).unwrap();
    let diff: Vec<f64> = field.values().iter().zip(reference.values()).map(|(a, b)| a - b).collect();
    sys.l2_norm(&NodalField::new(mesh, diff).unwrap()) / sys.l2_norm(&reference)
}

#[test]
fn adjoint_vanishes_for_zero_residual() {
    let res = Resolution::default();
    let shape = generic_shape(4);
    let domain = HoldAll::default();
    let data = inverse_crime_data(&shape, &domain, &ones(res.n_theta), res).unwrap();
    let state = solve_forward(&Problem::new(domain, data, res), &shape).unwrap();
    assert!(state.misfit < 1e-24);
    assert!(solve_adjoint(&state).unwrap().max_abs() < 1e-12);
}

#[test]
fn adjoint_matches_radial_solution() {
    let (problem, shape) = concentric_problem(Resolution::default());
    let ctx = ShapeContext::new(&problem, &shape).unwrap();
    let u1 = RadialSolution::annulus(0.5, 1.0, 0.0, 1.0).value(1.0);
    let exact = RadialSolution::annulus(0.5, 1.0, 0.0, u1);
    let err = relative_nodal_error(&ctx, &ctx.w, |r| exact.value(r));
    assert!(err < 1e-3, "relative error {err:.3e}");
}

#[test]
fn adjoint_is_linear_in_residual() {
    let (problem, shape) = concentric_problem(Resolution::new(16, 64));
    let state = solve_forward(&problem, &shape).unwrap();
    let w = solve_adjoint(&state).unwrap();
    let mut doubled = state.clone();
    doubled.residual = state.residual.scaled(2.0);
    let w2 = solve_adjoint(&doubled).unwrap();
    let scale = w.max_abs();
    for (a, b) in w.values().iter().zip(w2.values()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * scale);
    }
}

#[test]
fn u_prime_for_uniform_dilation_matches_radial_solution() {
    let (problem, shape) = concentric_problem(Resolution::default());
    let ctx = ShapeContext::new(&problem, &shape).unwrap();
    let h = ctx.normal_component(&ones(64)).unwrap();
    let u_prime = ctx.u_prime(&h).unwrap();
    let state = RadialSolution::annulus(0.5, 1.0, 0.0, 1.0);
    let exact = RadialSolution::annulus(0.5, 1.0, -state.derivative(0.5), 0.0);
    let err = relative_nodal_error(&ctx, &u_prime, |r| exact.value(r));
    assert!(err < 1e-2, "relative error {err:.3e}");

    let (w_prime, _) = ctx.w_prime(&u_prime, &h).unwrap();
    let u1 = state.value(1.0);
    let adjoint = RadialSolution::annulus(0.5, 1.0, 0.0, u1);
    let exact_w = RadialSolution::annulus(0.5, 1.0, -adjoint.derivative(0.5), exact.value(1.0));
    let err = relative_nodal_error(&ctx, &w_prime, |r| exact_w.value(r));
    assert!(err < 1e-2, "relative error {err:.3e}");
}

#[test]
fn zero_perturbation_gives_zero_derivatives() {
    let res = Resolution::new(16, 64);
    let problem = synthetic_problem(&RadialShape::circle(0.45).unwrap(), res);
    let ctx = ShapeContext::new(&problem, &generic_shape(4)).unwrap();
    let zero = BoundaryField::zeros(64).unwrap();
    let u_prime = ctx.u_prime(&zero).unwrap();
    assert_eq!(u_prime.max_abs(), 0.0);
    let (w_prime, _) = ctx.w_prime(&u_prime, &zero).unwrap();
    assert_eq!(w_prime.max_abs(), 0.0);
    assert_eq!(ctx.hessian_apply(&zero, Weights::penalized(1e-2)).unwrap(), 0.0);
}

#[test]
fn w_prime_without_residual_sees_only_the_neumann_term() {
    let res = Resolution::new(16, 64);
    let shape = generic_shape(4);
    let domain = HoldAll::default();
    let data = inverse_crime_data(&shape, &domain, &ones(res.n_theta), res).unwrap();
    let problem = Problem::new(domain, data, res);
    let ctx = ShapeContext::new(&problem, &shape).unwrap();
    let h = ctx
        .normal_component(&BoundaryField::from_fn(64, |t| (2.0 * t).cos()).unwrap())
        .unwrap();
    let u_prime = ctx.u_prime(&h).unwrap();
    let (w_prime, neumann) = ctx.w_prime(&u_prime, &h).unwrap();
    let reference = ctx.state.system.solve(&neumann, &BoundaryField::zeros(64).unwrap()).unwrap();
    for (a, b) in w_prime.values().iter().zip(reference.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn u_prime_is_first_order_expansion_of_trace() {
    let truth = generic_shape(8);
    let problem = synthetic_problem(&truth, Resolution::default());
    let ctx = ShapeContext::new(&problem, &truth).unwrap();
    let mut direction = vec![0.0; truth.coefficients().len()];
    direction[0] = 0.3;
    direction[3] = 1.0;
    direction[9] = -0.5;
    let delta = BoundaryField::from_fourier(256, 0.3, &direction[1..9], &direction[9..]).unwrap();
    let h = ctx.normal_component(&delta).unwrap();
    let trace = ctx.state.system.outer_trace(&ctx.u_prime(&h).unwrap()).unwrap();
    let errors: Vec<f64> = [1e-2, 1e-3]
        .iter()
        .map(|&t| {
            let coeffs: Vec<f64> = truth.coefficients().iter().zip(&direction).map(|(a, b)| a + t * b).collect();
            let moved = solve_forward(&problem, &RadialShape::from_coefficients(&coeffs).unwrap()).unwrap();
            moved
                .trace
                .samples()
                .iter()
                .zip(ctx.state.trace.samples())
                .zip(trace.samples())
                .map(|((a, b), d)| (a - b - t * d).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let order = (errors[0] / errors[1]).log10();
    assert!(order >= 1.5, "observed order {order:.3} from {errors:?}");
}

#[test]
fn gradient_vanishes_on_nonzero_modes_for_concentric_circles() {
    let (problem, shape) = concentric_problem(Resolution::default());
    let report = ShapeContext::new(&problem, &shape).unwrap().gradient(Weights::penalized(1e-3)).unwrap();
    assert_eq!(report.coeff_gradient.len(), 17);
    assert!(report.coeff_gradient[0].abs() > 1e-3);
    for g in &report.coeff_gradient[1..] {
        assert!(g.abs() < 1e-10, "{g:e}");
    }
}

#[test]
fn perimeter_gradient_of_circle_radius_is_two_pi() {
    for rho in [0.3, 0.5, 0.7] {
        let (problem, _) = concentric_problem(Resolution::new(16, 64));
        let shape = RadialShape::circle_with_modes(rho, 4).unwrap();
        let report = ShapeContext::new(&problem, &shape)
            .unwrap()
            .gradient(Weights::perimeter_only(1.0))
            .unwrap();
        assert!((report.coeff_gradient[0] - 2.0 * PI).abs() < 1e-10);
        assert!((report.density.samples()[0] - 1.0 / rho).abs() < 1e-12);
    }
}

#[test]
fn gradient_matches_central_differences_componentwise() {
    let res = Resolution::default();
    let problem = synthetic_problem(&RadialShape::circle(0.45).unwrap(), res);
    let shape = generic_shape(8);
    let report = verify_gradient_fd(&problem, &shape, 1e-3, &[1e-5], None).unwrap();
    let fd = &report.steps[0].fd_gradient;
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (c, (a, f)) in report.adjoint.coeff_gradient.iter().zip(fd).enumerate() {
        if f.abs() > 1e-3 * scale {
            assert!((a - f).abs() < 1e-2 * f.abs(), "component {c}: {a:e} vs {f:e}");
        } else {
            assert!((a - f).abs() < 1e-2 * scale, "component {c}: {a:e} vs {f:e}");
        }
    }
    assert!(report.best_error < 1e-2);
    assert_eq!(report.adjoint.fd_relative_error, Some(report.best_error));
}

#[test]
fn gradient_error_saturates_at_discretization_floor() {
    let res = Resolution::new(16, 64);
    let problem = synthetic_problem(&RadialShape::circle(0.45).unwrap(), res);
    let shape = generic_shape(4);
    let components = [0, 2, 4];
    let coarse = verify_gradient_fd(&problem, &shape, 1e-3, &[1e-3, 1e-4, 1e-5], Some(&components)).unwrap();
    assert_eq!(coarse.regime, FdRegime::Saturated);
    let last = coarse.steps.last().unwrap().relative_error;
    assert!(last < 1.1 * coarse.best_error);

    let finer = synthetic_problem(&RadialShape::circle(0.45).unwrap(), res.refined(2));
    let fine = verify_gradient_fd(&finer, &shape, 1e-3, &[1e-4], Some(&components)).unwrap();
    assert!(fine.best_error < 0.5 * coarse.best_error, "{} vs {}", fine.best_error, coarse.best_error);
}

#[test]
fn perimeter_dominated_gradient_is_nearly_exact() {
    let problem = synthetic_problem(&RadialShape::circle(0.45).unwrap(), Resolution::new(16, 64));
    let report = verify_gradient_fd_weighted(
        &problem,
        &generic_shape(4),
        Weights::perimeter_only(1.0),
        &[1e-3, 1e-4],
        None,
    )
    .unwrap();
    assert!(report.best_error < 1e-6, "{:e}", report.best_error);
}

#[test]
fn zero_data_gives_zero_gradient() {
    let res = Resolution::new(16, 64);
    let problem = Problem::new(HoldAll::default(), CauchyData::trivial(res.n_theta).unwrap(), res);
    let report = verify_gradient_fd(&problem, &generic_shape(4), 0.0, &[1e-4], None).unwrap();
    assert!(report.adjoint.coeff_gradient.iter().all(|&g| g == 0.0));
    assert!(report.steps[0].fd_gradient.iter().all(|&g| g == 0.0));
    assert_eq!(report.best_error, 0.0);
}

#[test]
fn bad_steps_are_rejected() {
    let problem = synthetic_problem(&RadialShape::circle(0.45).unwrap(), Resolution::new(16, 64));
    let shape = generic_shape(2);
    assert!(verify_gradient_fd(&problem, &shape, 0.0, &[], None).is_err());
    assert!(verify_gradient_fd(&problem, &shape, 0.0, &[1e-4, 1e-3], None).is_err());
    assert!(verify_gradient_fd(&problem, &shape, 0.0, &[-1e-4], None).is_err());
}

fn second_difference(problem: &Problem, shape: &RadialShape, direction: &[f64], eta: f64, t: f64) -> f64 {
    let f = |s: f64| {
        let c: Vec<f64> = shape.coefficients().iter().zip(direction).map(|(a, b)| a + s * b).collect();
        evaluate(problem, &RadialShape::from_coefficients(&c).unwrap(), eta).unwrap().total
    };
    (f(t) - 2.0 * f(0.0) + f(-t)) / (t * t)
}

#[test]
fn hessian_apply_matches_second_differences_near_truth() {
    let truth = generic_shape(8);
    let problem = synthetic_problem(&truth, Resolution::default());
    let ctx = ShapeContext::new(&problem, &truth).unwrap();
    let mut direction = vec![0.0; truth.coefficients().len()];
    direction[0] = 0.2;
    direction[2] = -0.7;
    direction[8 + 3] = 0.5;
    let delta = BoundaryField::from_fn(256, |t| 0.2 - 0.7 * (2.0 * t).cos() + 0.5 * (3.0 * t).sin()).unwrap();
    for eta in [0.0, 1e-3] {
        let exact = ctx.hessian_apply(&delta, Weights::penalized(eta)).unwrap();
        let fd = second_difference(&problem, &truth, &direction, eta, 3e-3);
        assert!((exact - fd).abs() < 5e-2 * fd.abs(), "eta {eta}: {exact} vs {fd}");
    }
}

#[test]
fn misfit_hessian_on_concentric_circle_follows_bessel_modes() {
    // Concentric data are radial, so the misfit is minimal at the circle
    // itself and the Hessian reduces to ∫|u'|² on ∂Ω.
    let res = Resolution::default();
    let shape = RadialShape::circle_with_modes(0.5, 8).unwrap();
    let domain = HoldAll::default();
    let data = inverse_crime_data(&shape, &domain, &ones(res.n_theta), res).unwrap();
    let problem = Problem::new(domain, data, res);
    let ctx = ShapeContext::new(&problem, &shape).unwrap();
    let parts = HessianParts::assemble(&ctx, 8, true).unwrap();
    assert!(parts.raw_asymmetry < 1e-10);
    let spectrum = parts.spectrum(Weights::penalized(0.0), SobolevExponent::Zero).unwrap();
    let state = RadialSolution::annulus(0.5, 1.0, 0.0, 1.0);
    let flux = state.derivative(0.5);
    let modal = spectrum.modal_diagonal(&shape);
    for (k, &value) in modal.iter().enumerate() {
        let exact = modal_bessel_value(k, flux);
        assert!((value - exact).abs() < 0.15 * exact, "mode {k}: {value:e} vs {exact:e}");
    }
    let lambdas = &spectrum.mode_eigenvalues;
    assert!(lambdas[2..].windows(2).all(|w| w[1] < w[0]));
    assert!(log_concavity_defect(&lambdas[1..]) < 0.05);
}

/// `∫_{∂Ω}|u'_k|² / ‖cos kθ‖²_{L²(∂ω)}` for the mode-`k` dilation of the
/// circle of radius 1/2, from the modified Bessel functions of order `k`.
fn modal_bessel_value(k: usize, flux: f64) -> f64 {
    let (i_in, k_in) = bessel_ik(k, 0.5);
    let (i_out, k_out) = bessel_ik(k, 1.0);
    let (di_out, dk_out) = bessel_ik_derivative(k, 1.0);
    // α I_k(½) + β K_k(½) = −flux, α I_k'(1) + β K_k'(1) = 0
    let det = i_in * dk_out - k_in * di_out;
    let alpha = -flux * dk_out / det;
    let beta = flux * di_out / det;
    let outer = alpha * i_out + beta * k_out;
    let (boundary, norm) = if k == 0 { (2.0 * PI, PI) } else { (PI, 0.5 * PI) };
    boundary * outer * outer / norm
}

fn bessel_ik(n: usize, x: f64) -> (f64, f64) {
    // power series for I_n and upward recurrence for K_n
    let i = (0..60)
        .map(|m| {
            let log_term = (2 * m + n) as f64 * (0.5 * x).ln() - ln_factorial(m) - ln_factorial(m + n);
            log_term.exp()
        })
        .sum::<f64>();
    let (mut k_prev, mut k_cur) = (obstacle_core::bessel::k0(x), obstacle_core::bessel::k1(x));
    if n == 0 {
        return (i, k_prev);
    }
    for m in 1..n {
        let next = k_prev + 2.0 * m as f64 / x * k_cur;
        k_prev = k_cur;
        k_cur = next;
    }
    (i, k_cur)
}

fn bessel_ik_derivative(n: usize, x: f64) -> (f64, f64) {
    let (i_n, k_n) = bessel_ik(n, x);
    let (i_next, k_next) = bessel_ik(n + 1, x);
    // I_n' = I_{n+1} + n I_n / x, K_n' = −K_{n+1} + n K_n / x
    (i_next + n as f64 * i_n / x, -k_next + n as f64 * k_n / x)
}

fn ln_factorial(m: usize) -> f64 {
    (1..=m).map(|j| (j as f64).ln()).sum()
}

#[test]
fn hessian_assembly_is_symmetric_and_deterministic() {
    let truth = generic_shape(4);
    let problem = synthetic_problem(&truth, Resolution::new(16, 64));
    let ctx = ShapeContext::new(&problem, &truth).unwrap();
    let a = HessianParts::assemble(&ctx, 4, true).unwrap();
    let b = HessianParts::assemble(&ctx, 4, true).unwrap();
    assert_eq!(a, b);
    let spectrum = a.spectrum(Weights::penalized(1e-3), SobolevExponent::One).unwrap();
    assert!(spectrum.symmetry_defect < 1e-8);
    assert_eq!(spectrum.basis_size, 9);
    assert!(spectrum.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    assert!(HessianParts::assemble(&ctx, 5, true).is_err());
}

#[test]
fn perimeter_only_h1_bound_is_uniform_in_frequency() {
    let res = Resolution::new(16, 64);
    let shape = RadialShape::circle_with_modes(0.5, 8).unwrap();
    let problem = synthetic_problem(&shape, res);
    let ctx = ShapeContext::new(&problem, &shape).unwrap();
    let parts = HessianParts::assemble(&ctx, 8, false).unwrap();
    let eta = 1e-2;
    let spectrum = parts.spectrum(Weights::perimeter_only(eta), SobolevExponent::One).unwrap();
    // k²/(r²(1 + k²)) ≥ 1/(2r²) for k ≥ 1
    let bound = spectrum.rayleigh_bound_from(1);
    assert!((bound - eta / (2.0 * 0.25)).abs() < 1e-10, "{bound}");
    // the constant mode carries no tangential energy
    assert!(spectrum.matrix[(0, 0)].abs() < 1e-14);
    assert!(spectrum.rayleigh_lower_bound.abs() < 1e-12);
}

#[test]
fn h1_rayleigh_bound_is_monotone_in_eta() {
    let truth = generic_shape(6);
    let problem = synthetic_problem(&truth, Resolution::new(16, 64));
    let ctx = ShapeContext::new(&problem, &truth).unwrap();
    let parts = HessianParts::assemble(&ctx, 6, true).unwrap();
    let bounds: Vec<f64> = [0.0, 1e-4, 1e-3, 1e-2]
        .iter()
        .map(|&eta| {
            parts
                .spectrum(Weights::penalized(eta), SobolevExponent::One)
                .unwrap()
                .rayleigh_lower_bound
        })
        .collect();
    assert!(bounds.windows(2).all(|w| w[1] >= w[0]), "{bounds:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn adjoint_and_direct_derivatives_agree(
        c0 in -1.0f64..1.0,
        a in prop::collection::vec(-1.0f64..1.0, 4),
        b in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let problem = synthetic_problem(&RadialShape::circle(0.45).unwrap(), Resolution::new(16, 64));
        let ctx = ShapeContext::new(&problem, &generic_shape(4)).unwrap();
        let delta = BoundaryField::from_fourier(64, c0, &a, &b).unwrap();
        let adjoint = ctx.adjoint_directional_derivative(&delta).unwrap();
        let direct = ctx.direct_directional_derivative(&delta).unwrap();
        prop_assert!((adjoint - direct).abs() <= 1e-6 * direct.abs().max(1e-12));
    }

    #[test]
    fn polarized_hessian_is_symmetric_for_random_pairs(
        x in prop::collection::vec(-1.0f64..1.0, 9),
        y in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let truth = generic_shape(4);
        let problem = synthetic_problem(&RadialShape::circle(0.45).unwrap(), Resolution::new(16, 64));
        let ctx = ShapeContext::new(&problem, &truth).unwrap();
        let m = HessianParts::assemble(&ctx, 4, true).unwrap().combined(Weights::penalized(1e-3));
        let x = nalgebra::DVector::from_vec(x);
        let y = nalgebra::DVector::from_vec(y);
        let bxy = x.dot(&(&m * &y));
        let byx = y.dot(&(&m * &x));
        prop_assert!((bxy - byx).abs() <= 1e-8 * m.amax());
    }
}
