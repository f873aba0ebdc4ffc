//! The boundary least-squares misfit, the perimeter, their penalized sum
//! and synthetic Cauchy data.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fourier::BoundaryField;
use crate::geometry::{HoldAll, RadialShape, DEFAULT_N_THETA};
use crate::meshing::{build_mesh_with, MeshOptions};
use crate::pde::{FemSystem, NodalField};

/// Discretization parameters shared by every solve of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub n_radial: usize,
    pub n_angular: usize,
    /// Quadrature points for perimeter and curvature integrals.
    pub n_theta: usize,
    pub grading: f64,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            n_radial: 32,
            n_angular: 128,
            n_theta: DEFAULT_N_THETA,
            grading: 1.0,
        }
    }
}

impl Resolution {
    pub fn new(n_radial: usize, n_angular: usize) -> Self {
        Self {
            n_radial,
            n_angular,
            ..Self::default()
        }
    }

    /// Same resolution refined by `factor` in both mesh directions.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_radial: self.n_radial * factor,
            n_angular: self.n_angular * factor,
            n_theta: self.n_theta.max(self.n_angular * factor),
            grading: self.grading,
        }
    }
}

/// How a data set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DataProvenance {
    pub seed: u64,
    pub noise_level: f64,
    /// Refinement of the synthesis mesh; 1 means the inverse-crime mesh.
    pub fine_factor: usize,
}

/// Neumann datum and Dirichlet measurement on ∂Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    pub g_n: BoundaryField,
    pub g_d: BoundaryField,
    pub provenance: DataProvenance,
}

impl CauchyData {
    pub fn new(g_n: BoundaryField, g_d: BoundaryField, provenance: DataProvenance) -> Result<Self> {
        if g_n.max_abs() == 0.0 && g_d.max_abs() == 0.0 {
            return Err(Error::InvalidField("Cauchy pair is identically zero".into()));
        }
        Ok(Self { g_n, g_d, provenance })
    }

    /// The trivial pair `(0, 0)`, excluded by [`CauchyData::new`]; only
    /// useful for checking that derivatives vanish identically.
    pub fn trivial(n: usize) -> Result<Self> {
        Ok(Self {
            g_n: BoundaryField::zeros(n)?,
            g_d: BoundaryField::zeros(n)?,
            provenance: DataProvenance::default(),
        })
    }
}

/// Everything but the shape: hold-all, data and discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub domain: HoldAll,
    pub data: CauchyData,
    pub resolution: Resolution,
}

impl Problem {
    pub fn new(domain: HoldAll, data: CauchyData, resolution: Resolution) -> Self {
        Self {
            domain,
            data,
            resolution,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub misfit: f64,
    /// Perimeter of ∂ω plus the constant 2πR_Ω of ∂Ω.
    pub perimeter: f64,
    pub eta: f64,
    pub total: f64,
}

impl ObjectiveValue {
    pub fn new(misfit: f64, perimeter: f64, eta: f64) -> Self {
        Self {
            misfit,
            perimeter,
            eta,
            total: misfit + eta * perimeter,
        }
    }
}

/// The state `u` of one shape together with the quantities derived from
/// it that the shape calculus reuses.
#[derive(Debug, Clone)]
pub struct StateSolution {
    pub shape: RadialShape,
    pub system: FemSystem,
    pub u: NodalField,
    pub trace: BoundaryField,
    /// `trace(u) − g_D` on the mesh's angular grid.
    pub residual: BoundaryField,
    pub misfit: f64,
}

/// Builds the reconstruction mesh of `shape` and solves the state with
/// zero Dirichlet data on ∂ω.
pub fn solve_forward(problem: &Problem, shape: &RadialShape) -> Result<StateSolution> {
    let res = problem.resolution;
    problem.domain.check(shape, res.n_theta)?;
    let mesh = build_mesh_with(
        shape,
        &problem.domain,
        res.n_radial,
        res.n_angular,
        MeshOptions {
            grading: res.grading,
            phase: 0.0,
        },
    )?;
    let system = FemSystem::new(Arc::new(mesh));
    let zero = BoundaryField::zeros(res.n_angular)?;
    let u = system.solve(&problem.data.g_n, &zero)?;
    let trace = system.outer_trace(&u)?;
    let measured = problem.data.g_d.values_on_grid(res.n_angular, 0.0);
    let residual = BoundaryField::from_samples(
        trace
            .samples()
            .iter()
            .zip(&measured)
            .map(|(a, b)| a - b)
            .collect(),
    )?;
    let misfit = 0.5 * problem.domain.r_omega() * residual.squared_integral();
    Ok(StateSolution {
        shape: shape.clone(),
        system,
        u,
        trace,
        residual,
        misfit,
    })
}

/// Perimeter of ∂A = ∂ω ∪ ∂Ω.
pub fn relative_perimeter(shape: &RadialShape, domain: &HoldAll, n_theta: usize) -> f64 {
    shape.perimeter(n_theta) + 2.0 * PI * domain.r_omega()
}

/// `ℒ_η = ½∫_{∂Ω}|u − g_D|² + η 𝒫`.
pub fn evaluate(problem: &Problem, shape: &RadialShape, eta: f64) -> Result<ObjectiveValue> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be >= 0, got {eta}")));
    }
    let state = solve_forward(problem, shape)?;
    Ok(ObjectiveValue::new(
        state.misfit,
        relative_perimeter(shape, &problem.domain, problem.resolution.n_theta),
        eta,
    ))
}

/// Synthetic measurement from `true_shape`.
///
/// The state is solved on a mesh `fine_factor` times finer than
/// `resolution`, with its grid rotated by half a fine cell, and its trace
/// is resampled on the `resolution.n_theta` grid. Uniform noise is then
/// added, scaled so that `‖noise‖_{L²} = noise_level · ‖g_D‖_{L²}`.
pub fn synthesize_data(
    true_shape: &RadialShape,
    domain: &HoldAll,
    g_n: &BoundaryField,
    noise_level: f64,
    seed: u64,
    fine_factor: usize,
    resolution: Resolution,
) -> Result<CauchyData> {
    if fine_factor < 2 {
        return Err(Error::InvalidArgument(format!(
            "fine_factor must be >= 2 to avoid the inverse crime, got {fine_factor}"
        )));
    }
    if !(noise_level >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be >= 0, got {noise_level}"
        )));
    }
    let fine = resolution.refined(fine_factor);
    let phase = PI / fine.n_angular as f64;
    let mesh = build_mesh_with(
        true_shape,
        domain,
        fine.n_radial,
        fine.n_angular,
        MeshOptions {
            grading: fine.grading,
            phase,
        },
    )?;
    let system = FemSystem::new(Arc::new(mesh));
    let u = system.solve(g_n, &BoundaryField::zeros(fine.n_angular)?)?;
    let clean = system.outer_trace(&u)?.resample(resolution.n_theta)?;
    let g_d = add_noise(&clean, noise_level, seed)?;
    CauchyData::new(
        g_n.clone(),
        g_d,
        DataProvenance {
            seed,
            noise_level,
            fine_factor,
        },
    )
}

/// Data generated on the reconstruction mesh itself.
pub fn inverse_crime_data(
    shape: &RadialShape,
    domain: &HoldAll,
    g_n: &BoundaryField,
    resolution: Resolution,
) -> Result<CauchyData> {
    let mesh = build_mesh_with(
        shape,
        domain,
        resolution.n_radial,
        resolution.n_angular,
        MeshOptions {
            grading: resolution.grading,
            phase: 0.0,
        },
    )?;
    let system = FemSystem::new(Arc::new(mesh));
    let u = system.solve(g_n, &BoundaryField::zeros(resolution.n_angular)?)?;
    CauchyData::new(
        g_n.clone(),
        system.outer_trace(&u)?,
        DataProvenance {
            seed: 0,
            noise_level: 0.0,
            fine_factor: 1,
        },
    )
}

/// Adds i.i.d. uniform noise with relative L² amplitude `level`.
pub fn add_noise(clean: &BoundaryField, level: f64, seed: u64) -> Result<BoundaryField> {
    if level == 0.0 {
        return Ok(clean.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..clean.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw_norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let clean_norm = clean.samples().iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = level * clean_norm / raw_norm;
    BoundaryField::from_samples(
        clean
            .samples()
            .iter()
            .zip(&raw)
            .map(|(c, n)| c + scale * n)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> BoundaryField {
        BoundaryField::constant(n, 1.0).unwrap()
    }

    #[test]
    fn noise_has_requested_relative_size() {
        let clean = BoundaryField::from_fn(256, |t| 0.4 + 0.1 * t.cos()).unwrap();
        let noisy = add_noise(&clean, 0.01, 7).unwrap();
        let diff = noisy.zip_with(&clean, |a, b| a - b).unwrap();
        let rel = diff.squared_integral().sqrt() / clean.squared_integral().sqrt();
        assert!((rel - 0.01).abs() < 1e-12);
        assert_eq!(noisy, add_noise(&clean, 0.01, 7).unwrap());
        assert_ne!(noisy, add_noise(&clean, 0.01, 8).unwrap());
    }

    #[test]
    fn inverse_crime_misfit_vanishes() {
        let shape = RadialShape::new(0.5, vec![0.0, 0.08], vec![0.0, 0.0]).unwrap();
        let res = Resolution::new(8, 32);
        let data = inverse_crime_data(&shape, &HoldAll::default(), &ones(32), res).unwrap();
        let problem = Problem::new(HoldAll::default(), data, res);
        let value = evaluate(&problem, &shape, 0.0).unwrap();
        assert!(value.misfit < 1e-12);
        assert_eq!(value.total, value.misfit);
    }

    #[test]
    fn total_is_misfit_plus_weighted_perimeter() {
        let shape = RadialShape::circle(0.45).unwrap();
        let res = Resolution::new(8, 32);
        let data = inverse_crime_data(
            &RadialShape::circle(0.5).unwrap(),
            &HoldAll::default(),
            &ones(32),
            res,
        )
        .unwrap();
        let problem = Problem::new(HoldAll::default(), data, res);
        let v = evaluate(&problem, &shape, 0.3).unwrap();
        assert!(v.misfit > 0.0);
        assert!((v.perimeter - 2.0 * PI * 1.45).abs() < 1e-12);
        assert!((v.total - (v.misfit + 0.3 * v.perimeter)).abs() <= 1e-15 * v.total);
        assert!(evaluate(&problem, &shape, -1.0).is_err());
    }

    #[test]
    fn synthesis_rejects_inverse_crime_factor() {
        let shape = RadialShape::circle(0.5).unwrap();
        let err = synthesize_data(&shape, &HoldAll::default(), &ones(32), 0.0, 0, 1, Resolution::new(8, 32));
        assert!(err.is_err());
    }

    #[test]
    fn trivial_cauchy_pair_is_rejected() {
        let z = BoundaryField::zeros(16).unwrap();
        assert!(CauchyData::new(z.clone(), z, DataProvenance::default()).is_err());
    }
}
