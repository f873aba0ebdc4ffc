use std::f64::consts::PI;

use obstacle_core::geometry::{boundary_norm, check_epsilon_cone, hausdorff_distance};
use obstacle_core::{BoundaryField, HoldAll, RadialShape};
use proptest::prelude::*;

fn shape(r0: f64, cos: &[(usize, f64)], sin: &[(usize, f64)]) -> RadialShape {
    let k = cos.iter().chain(sin).map(|&(k, _)| k).max().unwrap_or(0);
    let mut a = vec![0.0; k];
    let mut b = vec![0.0; k];
    for &(m, v) in cos {
        a[m - 1] = v;
    }
    for &(m, v) in sin {
        b[m - 1] = v;
    }
    RadialShape::new(r0, a, b).unwrap()
}

/// Adaptive Simpson quadrature.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

#[test]
fn perimeter_matches_adaptive_quadrature() {
    let s = shape(0.5, &[(2, 0.1)], &[]);
    let speed = |t: f64| {
        let (r, r1, _) = s.radius_derivatives(t);
        r.hypot(r1)
    };
    let oracle = adaptive_simpson(&speed, 0.0, 2.0 * PI, 1e-13);
    assert!((s.perimeter(256) - oracle).abs() < 1e-9, "{} vs {oracle}", s.perimeter(256));
}

#[test]
fn hausdorff_matches_brute_force_oracle() {
    let circle = RadialShape::circle(0.5).unwrap();
    let shifted = shape(0.5, &[(1, 0.1)], &[]);
    let n = 512;
    let dense = 16 * n;
    let p = circle.sample_points(dense);
    let q = shifted.sample_points(dense);
    let directed = |a: &[[f64; 2]], b: &[[f64; 2]]| {
        a.iter()
            .map(|x| b.iter().map(|y| (x[0] - y[0]).hypot(x[1] - y[1])).fold(f64::INFINITY, f64::min))
            .fold(0.0f64, f64::max)
    };
    let oracle = directed(&p, &q).max(directed(&q, &p));
    let d = hausdorff_distance(&circle, &shifted, n).unwrap();
    assert!((d - oracle).abs() < 1e-4, "{d} vs {oracle}");
}

#[test]
fn circle_perimeter_and_curvature_across_the_band() {
    let domain = HoldAll::default();
    for i in 0..=20 {
        let rho = domain.r_min() + (domain.r_k() - domain.r_min()) * (0.01 + 0.98 * i as f64 / 20.0);
        let c = RadialShape::circle(rho).unwrap();
        assert!((c.perimeter(256) - 2.0 * PI * rho).abs() < 1e-12);
        for j in 0..16 {
            let theta = 2.0 * PI * j as f64 / 16.0;
            assert!((c.curvature(theta) - 1.0 / rho).abs() < 1e-12);
        }
    }
}

#[test]
fn hausdorff_vanishes_only_for_equal_shapes() {
    let a = shape(0.5, &[(3, 0.02)], &[(1, 0.01)]);
    assert_eq!(hausdorff_distance(&a, &a.clone(), 256).unwrap(), 0.0);
    let b = shape(0.5, &[(3, 0.02)], &[(1, 0.0101)]);
    assert!(hausdorff_distance(&a, &b, 256).unwrap() > 0.0);
}

fn coefficient_shape() -> impl Strategy<Value = RadialShape> {
    (
        0.35f64..0.55,
        proptest::collection::vec(-0.04f64..0.04, 6),
        proptest::collection::vec(-0.04f64..0.04, 6),
    )
        .prop_map(|(r0, a, b)| RadialShape::new(r0, a, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cone_check_is_monotone_in_epsilon(s in coefficient_shape(), spike in 0.0f64..0.2) {
        let mut coeffs = s.coefficients();
        let k = s.mode_count();
        coeffs[k] += spike;
        let s = RadialShape::from_coefficients(&coeffs).unwrap();
        let grid = [0.01, 0.05, 0.1, 0.2, 0.3];
        let passes: Vec<bool> = grid
            .iter()
            .map(|&e| check_epsilon_cone(&s, e, 32, 25).unwrap().passed)
            .collect();
        for w in passes.windows(2) {
            prop_assert!(w[0] || !w[1], "{passes:?}");
        }
    }
}

proptest! {
    #[test]
    fn l2_boundary_norm_is_the_weighted_quadrature(
        s in coefficient_shape(),
        c in proptest::collection::vec(-1.0f64..1.0, 17),
    ) {
        let h = BoundaryField::from_fourier(64, c[0], &c[1..9], &c[9..]).unwrap();
        let mean_radius = s.mean_radius();
        let quad: f64 = h.samples().iter().map(|v| v * v).sum::<f64>() * 2.0 * PI / 64.0 * mean_radius;
        let norm = boundary_norm(&h, &s, 0.0).unwrap();
        prop_assert!((norm * norm - quad).abs() <= 1e-10 * quad.max(1.0));
    }

    #[test]
    fn hausdorff_is_bounded_by_radial_sup_distance(p in coefficient_shape(), q in coefficient_shape()) {
        // the radial segment is a particular matching between the curves
        let n = 256;
        let sup = (0..4 * n)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / (4 * n) as f64;
                (p.radius(t) - q.radius(t)).abs()
            })
            .fold(0.0f64, f64::max);
        let d = hausdorff_distance(&p, &q, n).unwrap();
        prop_assert!(d <= sup + 1e-3);
    }
}
