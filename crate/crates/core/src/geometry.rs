//! Star-shaped obstacles, the hold-all domain and boundary geometry.
//!
//! An obstacle ω is the region enclosed by the curve
//! `θ ↦ r(θ)(cos θ, sin θ)` with the truncated Fourier radius
//! `r(θ) = r0 + Σ_{k=1}^{K} (a_k cos kθ + b_k sin kθ)`.
//! The unit normal ν on ∂ω points out of ω, into the annulus A = Ω∖ω̄;
//! curvature is positive for convex obstacles under this orientation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fourier::{grid_angle, BoundaryField};

/// Angular resolution used for quadrature and pointwise checks.
pub const DEFAULT_N_THETA: usize = 256;

/// Default number of Fourier modes of a reconstruction.
pub const DEFAULT_K_MAX: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialShape {
    r0: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl RadialShape {
    /// Builds a shape, rejecting non-finite coefficients and radii that
    /// reach zero anywhere on a dense check grid.
    pub fn new(r0: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if cos.len() != sin.len() {
            return Err(Error::InvalidShape(format!(
                "coefficient arrays differ in length ({} vs {})",
                cos.len(),
                sin.len()
            )));
        }
        if !r0.is_finite() || cos.iter().chain(&sin).any(|v| !v.is_finite()) {
            return Err(Error::InvalidShape("non-finite coefficient".into()));
        }
        let shape = Self { r0, cos, sin };
        let (min, _) = shape.radius_range(shape.check_resolution());
        if min <= 0.0 {
            return Err(Error::InvalidShape(format!(
                "radius reaches {min:.3e} <= 0"
            )));
        }
        Ok(shape)
    }

    pub fn circle(radius: f64) -> Result<Self> {
        Self::new(radius, Vec::new(), Vec::new())
    }

    /// Circle with `k_max` zeroed modes.
    pub fn circle_with_modes(radius: f64, k_max: usize) -> Result<Self> {
        Self::new(radius, vec![0.0; k_max], vec![0.0; k_max])
    }

    /// Builds a shape from `(r0, a_1..a_K, b_1..b_K)`.
    pub fn from_coefficients(coeffs: &[f64]) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) {
            return Err(Error::InvalidShape(format!(
                "coefficient vector must have odd length 2K+1, got {}",
                coeffs.len()
            )));
        }
        let k = coeffs.len() / 2;
        Self::new(
            coeffs[0],
            coeffs[1..=k].to_vec(),
            coeffs[k + 1..].to_vec(),
        )
    }

    /// Coefficient vector `(r0, a_1..a_K, b_1..b_K)`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + 2 * self.cos.len());
        v.push(self.r0);
        v.extend_from_slice(&self.cos);
        v.extend_from_slice(&self.sin);
        v
    }

    /// Same curve with the coefficient arrays padded or truncated to `k`.
    pub fn with_mode_count(&self, k: usize) -> Result<Self> {
        let mut cos = self.cos.clone();
        let mut sin = self.sin.clone();
        cos.resize(k, 0.0);
        sin.resize(k, 0.0);
        Self::new(self.r0, cos, sin)
    }

    pub fn mode_count(&self) -> usize {
        self.cos.len()
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn cos_coeffs(&self) -> &[f64] {
        &self.cos
    }

    pub fn sin_coeffs(&self) -> &[f64] {
        &self.sin
    }

    /// `(1/2π) ∫ r dθ`, which is exactly `r0`.
    pub fn mean_radius(&self) -> f64 {
        self.r0
    }

    /// Σ_{k ≥ k_min} (a_k² + b_k²).
    pub fn mode_energy_from(&self, k_min: usize) -> f64 {
        self.cos
            .iter()
            .zip(&self.sin)
            .enumerate()
            .filter(|(i, _)| i + 1 >= k_min)
            .map(|(_, (a, b))| a * a + b * b)
            .sum()
    }

    fn check_resolution(&self) -> usize {
        DEFAULT_N_THETA.max(8 * self.cos.len())
    }

    pub fn radius(&self, theta: f64) -> f64 {
        self.radius_derivatives(theta).0
    }

    /// `(r, r', r'')` at θ.
    pub fn radius_derivatives(&self, theta: f64) -> (f64, f64, f64) {
        let (s1, c1) = theta.sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        let (mut r, mut r1, mut r2) = (self.r0, 0.0, 0.0);
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
            let kf = (k + 1) as f64;
            let v = a * c + b * s;
            r += v;
            r1 += kf * (b * c - a * s);
            r2 -= kf * kf * v;
        }
        (r, r1, r2)
    }

    pub fn point(&self, theta: f64) -> [f64; 2] {
        let r = self.radius(theta);
        [r * theta.cos(), r * theta.sin()]
    }

    /// dx/dθ of the boundary parametrization.
    pub fn tangent(&self, theta: f64) -> [f64; 2] {
        let (r, r1, _) = self.radius_derivatives(theta);
        let (s, c) = theta.sin_cos();
        [r1 * c - r * s, r1 * s + r * c]
    }

    /// |dx/dθ| = sqrt(r² + r'²).
    pub fn speed(&self, theta: f64) -> f64 {
        let (r, r1, _) = self.radius_derivatives(theta);
        r.hypot(r1)
    }

    /// Unit normal pointing out of the obstacle.
    pub fn outward_normal(&self, theta: f64) -> Result<[f64; 2]> {
        let [tx, ty] = self.tangent(theta);
        let len = tx.hypot(ty);
        if len < 1e-14 {
            return Err(Error::DegenerateTangent { theta });
        }
        Ok([ty / len, -tx / len])
    }

    /// Signed curvature, `(r² + 2r'² − r r'') / (r² + r'²)^{3/2}`.
    pub fn curvature(&self, theta: f64) -> f64 {
        let (r, r1, r2) = self.radius_derivatives(theta);
        let f2 = r * r + r1 * r1;
        (r * r + 2.0 * r1 * r1 - r * r2) / (f2 * f2.sqrt())
    }

    /// `e_r · ν = r / sqrt(r² + r'²)`: converts a radial displacement into
    /// its normal component.
    pub fn radial_normal_factor(&self, theta: f64) -> f64 {
        let (r, r1, _) = self.radius_derivatives(theta);
        r / r.hypot(r1)
    }

    /// Arc length by the trapezoid rule on `n` uniform angles.
    pub fn perimeter(&self, n: usize) -> f64 {
        let w = 2.0 * PI / n as f64;
        (0..n).map(|j| self.speed(grid_angle(j, n))).sum::<f64>() * w
    }

    /// Enclosed area, `½ ∫ r² dθ`.
    pub fn area(&self, n: usize) -> f64 {
        let w = 2.0 * PI / n as f64;
        0.5 * w
            * (0..n)
                .map(|j| self.radius(grid_angle(j, n)).powi(2))
                .sum::<f64>()
    }

    /// Minimum and maximum sampled radius.
    pub fn radius_range(&self, n: usize) -> (f64, f64) {
        (0..n)
            .map(|j| self.radius(grid_angle(j, n)))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            })
    }

    pub fn sample_points(&self, n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|j| self.point(grid_angle(j, n))).collect()
    }

    /// Whether `p` lies in the closed complement of the obstacle.
    pub fn is_outside(&self, p: [f64; 2], tol: f64) -> bool {
        let rho = p[0].hypot(p[1]);
        rho >= self.radius(p[1].atan2(p[0])) - tol
    }

    /// Radius as an `n`-sample boundary field.
    pub fn radius_field(&self, n: usize) -> Result<BoundaryField> {
        BoundaryField::from_fourier(n, self.r0, &self.cos, &self.sin)
    }
}

/// Outer disk Ω, the safety disk K and the minimal radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldAll {
    r_omega: f64,
    r_k: f64,
    r_min: f64,
}

impl Default for HoldAll {
    fn default() -> Self {
        Self {
            r_omega: 1.0,
            r_k: 0.8,
            r_min: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub min_radius: f64,
    pub max_radius: f64,
    pub above_rmin: bool,
    pub inside_k: bool,
}

impl Admissibility {
    pub fn ok(&self) -> bool {
        self.above_rmin && self.inside_k
    }
}

impl HoldAll {
    pub fn new(r_omega: f64, r_k: f64, r_min: f64) -> Result<Self> {
        if !(0.0 < r_min && r_min < r_k && r_k < r_omega) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < r_min < R_K < R_Omega, got r_min={r_min}, R_K={r_k}, R_Omega={r_omega}"
            )));
        }
        Ok(Self { r_omega, r_k, r_min })
    }

    pub fn r_omega(&self) -> f64 {
        self.r_omega
    }

    pub fn r_k(&self) -> f64 {
        self.r_k
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    /// Default initial guess: the centered circle of radius (r_min + R_K)/2.
    pub fn default_initial_radius(&self) -> f64 {
        0.5 * (self.r_min + self.r_k)
    }

    pub fn admissibility(&self, shape: &RadialShape, n: usize) -> Admissibility {
        let (min_radius, max_radius) = shape.radius_range(n);
        Admissibility {
            min_radius,
            max_radius,
            above_rmin: min_radius > self.r_min,
            inside_k: max_radius < self.r_k,
        }
    }

    pub fn check(&self, shape: &RadialShape, n: usize) -> Result<()> {
        let adm = self.admissibility(shape, n);
        if !adm.above_rmin {
            return Err(Error::Inadmissible(format!(
                "minimum radius {:.4} <= r_min {}",
                adm.min_radius, self.r_min
            )));
        }
        if !adm.inside_k {
            return Err(Error::Inadmissible(format!(
                "maximum radius {:.4} >= R_K {}",
                adm.max_radius, self.r_k
            )));
        }
        Ok(())
    }
}

/// Sobolev exponent of a boundary norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SobolevExponent {
    Zero,
    Half,
    One,
}

impl SobolevExponent {
    pub fn value(self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Half => 0.5,
            Self::One => 1.0,
        }
    }

    /// Weight `(1 + k²)^s` of mode `k`.
    pub fn weight(self, k: usize) -> f64 {
        let k2 = (k * k) as f64;
        match self {
            Self::Zero => 1.0,
            Self::Half => (1.0 + k2).sqrt(),
            Self::One => 1.0 + k2,
        }
    }
}

impl TryFrom<f64> for SobolevExponent {
    type Error = Error;

    fn try_from(s: f64) -> Result<Self> {
        if s == 0.0 {
            Ok(Self::Zero)
        } else if s == 0.5 {
            Ok(Self::Half)
        } else if s == 1.0 {
            Ok(Self::One)
        } else {
            Err(Error::UnsupportedExponent(s))
        }
    }
}

/// Squared Fourier-basis Sobolev norm on ∂ω,
/// `r̄ (2π ĥ0² + π Σ_k (1+k²)^s (a_k² + b_k²))` with `r̄` the mean radius.
pub fn boundary_norm_squared(h: &BoundaryField, shape: &RadialShape, s: SobolevExponent) -> f64 {
    let modes: f64 = h
        .cos_coeffs()
        .iter()
        .zip(h.sin_coeffs())
        .enumerate()
        .map(|(i, (a, b))| s.weight(i + 1) * (a * a + b * b))
        .sum();
    let nyq = if h.nyquist() != 0.0 {
        s.weight(h.len() / 2) * h.nyquist().powi(2)
    } else {
        0.0
    };
    shape.mean_radius() * (2.0 * PI * h.mean().powi(2) + PI * (modes + nyq))
}

pub fn boundary_norm(h: &BoundaryField, shape: &RadialShape, s: f64) -> Result<f64> {
    let s = SobolevExponent::try_from(s)?;
    Ok(boundary_norm_squared(h, shape, s).sqrt())
}

/// Squared norm of a single basis function (index into
/// `(1, cos θ..cos Kθ, sin θ..sin Kθ)`).
pub fn basis_norm_squared(index: usize, k_basis: usize, shape: &RadialShape, s: SobolevExponent) -> f64 {
    if index == 0 {
        2.0 * PI * shape.mean_radius()
    } else {
        let k = if index <= k_basis { index } else { index - k_basis };
        PI * shape.mean_radius() * s.weight(k)
    }
}

/// Symmetric Hausdorff distance between the boundaries sampled at
/// `n_samples` uniform angles.
pub fn hausdorff_distance(s1: &RadialShape, s2: &RadialShape, n_samples: usize) -> Result<f64> {
    if n_samples < 64 {
        return Err(Error::InvalidArgument(format!(
            "Hausdorff distance needs at least 64 samples, got {n_samples}"
        )));
    }
    let p = s1.sample_points(n_samples);
    let q = s2.sample_points(n_samples);
    Ok(directed_hausdorff(&p, &q).max(directed_hausdorff(&q, &p)))
}

pub(crate) fn directed_hausdorff(from: &[[f64; 2]], to: &[[f64; 2]]) -> f64 {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|b| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// A sampled counter-example to the ε-cone property of ω^c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeViolation {
    /// Angle of the boundary point x.
    pub theta: f64,
    pub x: [f64; 2],
    /// Vertex of the failing cone.
    pub y: [f64; 2],
    /// Cone point found inside the obstacle.
    pub z: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeCheck {
    pub passed: bool,
    pub violation: Option<ConeViolation>,
}

/// Number of fallback directions scanned when the normal fails.
const CONE_FAN: usize = 16;

/// Sampled necessary-condition test of the ε-cone property of ω^c.
///
/// For each of `n_boundary` points x on ∂ω the axis ξ_x is first taken
/// as ν(x), which points into ω^c; when that axis fails, a fan of
/// directions within ±π/2 of ν(x) is scanned. A direction is accepted
/// when, for every sampled vertex y ∈ closure(ω^c) ∩ B(x, ε), the
/// `n_cone` sampled points of C(y, ξ, ε) avoid ω. Vertices are boundary
/// points within ε of x and a polar grid of exterior points around x.
pub fn check_epsilon_cone(
    shape: &RadialShape,
    epsilon: f64,
    n_boundary: usize,
    n_cone: usize,
) -> Result<ConeCheck> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if n_boundary < 16 || n_cone < 16 {
        return Err(Error::InvalidArgument(format!(
            "cone sampler needs n_boundary, n_cone >= 16 (got {n_boundary}, {n_cone})"
        )));
    }
    let n_dense = 4 * n_boundary;
    let dense = shape.sample_points(n_dense);
    let cone = ConeStencil::new(epsilon, n_cone);

    for i in 0..n_boundary {
        let theta = grid_angle(i, n_boundary);
        let x = shape.point(theta);
        let nu = shape.outward_normal(theta)?;
        let vertices = cone_vertices(shape, x, epsilon, &dense);
        let mut first_failure = None;
        let mut accepted = false;
        for m in 0..=CONE_FAN {
            let xi = fan_direction(nu, m);
            match cone.first_intrusion(shape, &vertices, xi) {
                None => {
                    accepted = true;
                    break;
                }
                Some((y, z)) => {
                    if first_failure.is_none() {
                        first_failure = Some((y, z));
                    }
                }
            }
        }
        if !accepted {
            let (y, z) = first_failure.expect("at least one direction was tried");
            return Ok(ConeCheck {
                passed: false,
                violation: Some(ConeViolation { theta, x, y, z }),
            });
        }
    }
    Ok(ConeCheck {
        passed: true,
        violation: None,
    })
}

/// Candidate direction `m` of the fan: m = 0 is ν, then alternating
/// rotations of growing magnitude up to ±(π/2 − π/32).
fn fan_direction(nu: [f64; 2], m: usize) -> [f64; 2] {
    if m == 0 {
        return nu;
    }
    let step = (0.5 * PI - PI / 32.0) / (CONE_FAN / 2) as f64;
    let magnitude = m.div_ceil(2) as f64 * step;
    let angle = if m % 2 == 1 { magnitude } else { -magnitude };
    let (s, c) = angle.sin_cos();
    [c * nu[0] - s * nu[1], s * nu[0] + c * nu[1]]
}

fn cone_vertices(shape: &RadialShape, x: [f64; 2], epsilon: f64, dense: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = dense
        .iter()
        .copied()
        .filter(|p| (p[0] - x[0]).hypot(p[1] - x[1]) < epsilon)
        .collect();
    out.push(x);
    const RINGS: usize = 3;
    const SPOKES: usize = 16;
    for ring in 1..=RINGS {
        let rho = epsilon * ring as f64 / (RINGS + 1) as f64;
        for spoke in 0..SPOKES {
            let (s, c) = grid_angle(spoke, SPOKES).sin_cos();
            let y = [x[0] + rho * c, x[1] + rho * s];
            if shape.is_outside(y, 0.0) {
                out.push(y);
            }
        }
    }
    out
}

/// Cone sample offsets in the local frame (axis, normal-to-axis).
struct ConeStencil {
    offsets: Vec<[f64; 2]>,
}

impl ConeStencil {
    fn new(epsilon: f64, n_cone: usize) -> Self {
        let n_angle = ((n_cone as f64).sqrt().ceil() as usize).max(2);
        let n_len = n_cone.div_ceil(n_angle);
        let half_angle = epsilon.min(0.5 * PI);
        let mut offsets = Vec::with_capacity(n_angle * n_len);
        for a in 0..n_angle {
            let phi = -half_angle + 2.0 * half_angle * a as f64 / (n_angle - 1) as f64;
            let (s, c) = phi.sin_cos();
            for l in 1..=n_len {
                let t = epsilon * l as f64 / n_len as f64 * (1.0 - 1e-9);
                offsets.push([t * c, t * s]);
            }
        }
        Self { offsets }
    }

    fn first_intrusion(
        &self,
        shape: &RadialShape,
        vertices: &[[f64; 2]],
        xi: [f64; 2],
    ) -> Option<([f64; 2], [f64; 2])> {
        let perp = [-xi[1], xi[0]];
        for &y in vertices {
            for o in &self.offsets {
                let z = [
                    y[0] + o[0] * xi[0] + o[1] * perp[0],
                    y[1] + o[0] * xi[1] + o[1] * perp[1],
                ];
                if !shape.is_outside(z, 1e-12) {
                    return Some((y, z));
                }
            }
        }
        None
    }
}
