//! Structured boundary-fitted triangulation of the annulus between the
//! obstacle curve and the outer circle.
//!
//! Node `(i, j)` sits at `x(ρ_i, θ_j) = ((1−ρ_i) r(θ_j) + ρ_i R_Ω)(cos θ_j, sin θ_j)`
//! with index `i·n_angular + j`; ring `i = 0` is ∂ω and ring
//! `i = n_radial` is ∂Ω. Each cell is split along its `(i,j)–(i+1,j+1)`
//! diagonal.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{HoldAll, RadialShape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    /// Ratio between consecutive radial spacings; values above 1 refine
    /// towards the obstacle.
    pub grading: f64,
    /// Angular offset of every grid line.
    pub phase: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            grading: 1.0,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnularMesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    inner: Vec<usize>,
    outer: Vec<usize>,
    n_radial: usize,
    n_angular: usize,
    phase: f64,
    r_omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    /// Smallest interior angle, in radians.
    pub min_angle: f64,
    /// Largest ratio of longest to shortest edge within a triangle.
    pub max_aspect: f64,
}

impl MeshQuality {
    pub fn min_angle_degrees(&self) -> f64 {
        self.min_angle.to_degrees()
    }
}

pub fn build_mesh(
    shape: &RadialShape,
    domain: &HoldAll,
    n_radial: usize,
    n_angular: usize,
) -> Result<AnnularMesh> {
    build_mesh_with(shape, domain, n_radial, n_angular, MeshOptions::default())
}

pub fn build_mesh_with(
    shape: &RadialShape,
    domain: &HoldAll,
    n_radial: usize,
    n_angular: usize,
    options: MeshOptions,
) -> Result<AnnularMesh> {
    if n_radial < 2 || n_angular < 8 {
        return Err(Error::InvalidResolution(format!(
            "need n_radial >= 2 and n_angular >= 8, got ({n_radial}, {n_angular})"
        )));
    }
    let k_eff = effective_modes(shape);
    if n_angular < 4 * k_eff {
        return Err(Error::InvalidResolution(format!(
            "n_angular = {n_angular} cannot resolve {k_eff} modes (need >= {})",
            4 * k_eff
        )));
    }
    if !(options.grading > 0.0) || !options.grading.is_finite() {
        return Err(Error::InvalidResolution(format!(
            "grading must be positive, got {}",
            options.grading
        )));
    }
    let r_omega = domain.r_omega();
    let rho = radial_levels(n_radial, options.grading);

    let mut nodes = Vec::with_capacity((n_radial + 1) * n_angular);
    for &level in &rho {
        for j in 0..n_angular {
            let theta = options.phase + 2.0 * PI * j as f64 / n_angular as f64;
            let r_in = shape.radius(theta);
            if !(r_in < r_omega) {
                return Err(Error::InvalidShape(format!(
                    "obstacle radius {r_in:.4} at θ = {theta:.4} reaches the outer boundary"
                )));
            }
            let radius = (1.0 - level) * r_in + level * r_omega;
            let (s, c) = theta.sin_cos();
            nodes.push([radius * c, radius * s]);
        }
    }
    // outer ring exactly on the circle
    for j in 0..n_angular {
        let theta = options.phase + 2.0 * PI * j as f64 / n_angular as f64;
        let (s, c) = theta.sin_cos();
        nodes[n_radial * n_angular + j] = [r_omega * c, r_omega * s];
    }

    let idx = |i: usize, j: usize| i * n_angular + (j % n_angular);
    let mut triangles = Vec::with_capacity(2 * n_radial * n_angular);
    for i in 0..n_radial {
        for j in 0..n_angular {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let mesh = AnnularMesh {
        inner: (0..n_angular).collect(),
        outer: (0..n_angular).map(|j| idx(n_radial, j)).collect(),
        nodes,
        triangles,
        n_radial,
        n_angular,
        phase: options.phase,
        r_omega,
    };
    if let Some(t) = (0..mesh.triangles.len()).find(|&t| !(mesh.triangle_area(t) > 0.0)) {
        return Err(Error::InvalidShape(format!(
            "triangle {t} has non-positive area; the curve is not resolvable at this resolution"
        )));
    }
    Ok(mesh)
}

/// Highest mode with a non-zero coefficient.
fn effective_modes(shape: &RadialShape) -> usize {
    let (a, b) = (shape.cos_coeffs(), shape.sin_coeffs());
    (0..a.len())
        .rev()
        .find(|&k| a[k] != 0.0 || b[k] != 0.0)
        .map_or(0, |k| k + 1)
}

fn radial_levels(n: usize, grading: f64) -> Vec<f64> {
    if (grading - 1.0).abs() < 1e-14 {
        return (0..=n).map(|i| i as f64 / n as f64).collect();
    }
    let total = grading.powi(n as i32) - 1.0;
    let mut levels: Vec<f64> = (0..=n)
        .map(|i| (grading.powi(i as i32) - 1.0) / total)
        .collect();
    levels[n] = 1.0;
    levels
}

impl AnnularMesh {
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Nodes on ∂ω in counter-clockwise order; node `j` is at angle θ_j.
    pub fn inner_boundary(&self) -> &[usize] {
        &self.inner
    }

    /// Nodes on ∂Ω in counter-clockwise order.
    pub fn outer_boundary(&self) -> &[usize] {
        &self.outer
    }

    pub fn n_radial(&self) -> usize {
        self.n_radial
    }

    pub fn n_angular(&self) -> usize {
        self.n_angular
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn r_omega(&self) -> f64 {
        self.r_omega
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Angle of boundary column `j`.
    pub fn angle(&self, j: usize) -> f64 {
        self.phase + 2.0 * PI * j as f64 / self.n_angular as f64
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn quality(&self) -> MeshQuality {
        let mut min_angle = f64::INFINITY;
        let mut max_aspect = 0.0f64;
        for tri in &self.triangles {
            let p = tri.map(|i| self.nodes[i]);
            let len = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
            let e = [len(p[1], p[2]), len(p[2], p[0]), len(p[0], p[1])];
            for k in 0..3 {
                // law of cosines for the angle opposite edge k
                let (a, b, c) = (e[k], e[(k + 1) % 3], e[(k + 2) % 3]);
                let cos = ((b * b + c * c - a * a) / (2.0 * b * c)).clamp(-1.0, 1.0);
                min_angle = min_angle.min(cos.acos());
            }
            let longest = e.iter().cloned().fold(0.0, f64::max);
            let shortest = e.iter().cloned().fold(f64::INFINITY, f64::min);
            max_aspect = max_aspect.max(longest / shortest);
        }
        MeshQuality {
            min_angle,
            max_aspect,
        }
    }
}

/// Minimum interior angle and maximum edge ratio of a mesh.
pub fn mesh_quality(mesh: &AnnularMesh) -> MeshQuality {
    mesh.quality()
}
