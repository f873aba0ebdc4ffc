//! Numerical studies shared by the command-line tool and the acceptance
//! tests.

use std::sync::Arc;

use rayon::prelude::*;

use crate::bessel::RadialSolution;
use crate::error::{Error, Result};
use crate::fourier::BoundaryField;
use crate::functionals::{synthesize_data, CauchyData, Problem, Resolution};
use crate::geometry::{hausdorff_distance, HoldAll, RadialShape, SobolevExponent};
use crate::meshing::{build_mesh_with, MeshOptions};
use crate::optimize::{minimize_with_reference, OptimizationTrace, OptimizerConfig};
use crate::pde::{FemSystem, NodalField};
use crate::shape_calculus::{HessianParts, HessianSpectrum, ShapeContext, Weights};

/// Boundary samples for Hausdorff distances between reconstructions.
pub const HAUSDORFF_SAMPLES: usize = 512;

/// Neumann datum `cos(mθ)`; `m = 0` is the constant 1.
pub fn neumann_mode(n: usize, mode: usize) -> Result<BoundaryField> {
    BoundaryField::from_fn(n, |t| (mode as f64 * t).cos())
}

/// Synthetic measurement setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub domain: HoldAll,
    pub truth: RadialShape,
    pub g_n_mode: usize,
    pub g_n_amplitude: f64,
    pub noise_level: f64,
    pub seed: u64,
    pub fine_factor: usize,
    pub resolution: Resolution,
}

impl Scenario {
    pub fn data(&self) -> Result<CauchyData> {
        let g_n = neumann_mode(self.resolution.n_theta, self.g_n_mode)?.scaled(self.g_n_amplitude);
        synthesize_data(
            &self.truth,
            &self.domain,
            &g_n,
            self.noise_level,
            self.seed,
            self.fine_factor,
            self.resolution,
        )
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem::new(self.domain, self.data()?, self.resolution))
    }

    pub fn with_noise(&self, noise_level: f64, seed: u64) -> Self {
        Self {
            noise_level,
            seed,
            ..self.clone()
        }
    }
}

/// Observed order `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn observed_order(coarse: f64, fine: f64, refinement: f64) -> f64 {
    (coarse / fine).ln() / refinement.ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BesselLevel {
    pub resolution: Resolution,
    /// Relative L² error of the nodal solution.
    pub l2_error: f64,
    /// Largest relative error of the recovered flux on ∂ω.
    pub flux_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BesselStudy {
    pub r_inner: f64,
    pub levels: Vec<BesselLevel>,
    /// Observed L² orders between consecutive levels.
    pub orders: Vec<f64>,
}

/// Concentric annulus with `g_N ≡ 1` against the modified-Bessel solution
/// on a sequence of resolutions.
pub fn bessel_study(r_inner: f64, domain: &HoldAll, resolutions: &[Resolution]) -> Result<BesselStudy> {
    let shape = RadialShape::circle(r_inner)?;
    let r_outer = domain.r_omega();
    let exact = RadialSolution::annulus(r_inner, r_outer, 0.0, 1.0);
    let levels: Vec<BesselLevel> = resolutions
        .iter()
        .map(|&res| {
            let mesh = build_mesh_with(
                &shape,
                domain,
                res.n_radial,
                res.n_angular,
                MeshOptions {
                    grading: res.grading,
                    phase: 0.0,
                },
            )?;
            let mesh = Arc::new(mesh);
            let system = FemSystem::new(Arc::clone(&mesh));
            let g = BoundaryField::constant(res.n_angular, 1.0)?;
            let u = system.solve(&g, &BoundaryField::zeros(res.n_angular)?)?;
            let reference = NodalField::interpolate(Arc::clone(&mesh), |p| exact.value(p[0].hypot(p[1])))?;
            let diff: Vec<f64> = u.values().iter().zip(reference.values()).map(|(a, b)| a - b).collect();
            let l2_error = system.l2_norm(&NodalField::new(mesh, diff)?) / system.l2_norm(&reference);
            let target = exact.derivative(r_inner);
            let flux = system.inner_flux(&u, &g)?;
            let flux_error = flux.samples().iter().map(|v| (v - target).abs()).fold(0.0, f64::max) / target.abs();
            Ok(BesselLevel {
                resolution: res,
                l2_error,
                flux_error,
            })
        })
        .collect::<Result<_>>()?;
    let orders = levels
        .windows(2)
        .map(|w| {
            let ratio = w[1].resolution.n_angular as f64 / w[0].resolution.n_angular as f64;
            observed_order(w[0].l2_error, w[1].l2_error, ratio)
        })
        .collect();
    Ok(BesselStudy {
        r_inner,
        levels,
        orders,
    })
}

/// Hessian blocks at one shape and the spectra for every requested
/// weight and norm.
#[derive(Debug, Clone)]
pub struct SpectrumStudy {
    pub shape: RadialShape,
    pub parts: HessianParts,
    /// `(η, s, spectrum)` in request order.
    pub spectra: Vec<(f64, SobolevExponent, HessianSpectrum)>,
}

impl SpectrumStudy {
    pub fn spectrum(&self, eta: f64, s: SobolevExponent) -> Option<&HessianSpectrum> {
        self.spectra
            .iter()
            .find(|(e, x, _)| *e == eta && *x == s)
            .map(|(_, _, sp)| sp)
    }
}

pub fn spectrum_study(
    problem: &Problem,
    shape: &RadialShape,
    k_basis: usize,
    etas: &[f64],
    exponents: &[SobolevExponent],
) -> Result<SpectrumStudy> {
    let ctx = ShapeContext::new(problem, shape)?;
    let parts = HessianParts::assemble(&ctx, k_basis, true)?;
    let mut spectra = Vec::with_capacity(etas.len() * exponents.len());
    for &eta in etas {
        for &s in exponents {
            spectra.push((eta, s, parts.spectrum(Weights::penalized(eta), s)?));
        }
    }
    Ok(SpectrumStudy {
        shape: shape.clone(),
        parts,
        spectra,
    })
}

/// Compactness signature of a spectrum: `λ_k/λ_1` for mode `k`, where
/// `λ_1` is the largest eigenvalue.
pub fn mode_ratio(spectrum: &HessianSpectrum, mode: usize) -> Option<f64> {
    let l = *spectrum.mode_eigenvalues.get(mode)?;
    (!l.is_nan()).then(|| l / spectrum.eigenvalues[0])
}

/// First index from which `values` never increases.
pub fn monotone_tail_start(values: &[f64]) -> usize {
    let mut start = values.len().saturating_sub(1);
    while start > 0 && values[start] <= values[start - 1] {
        start -= 1;
    }
    start
}

#[derive(Debug, Clone)]
pub struct EtaRun {
    pub eta: f64,
    pub trace: OptimizationTrace,
    /// Distance to the unpenalized reconstruction.
    pub hausdorff_to_reference: f64,
}

#[derive(Debug, Clone)]
pub struct EtaSweep {
    pub reference: OptimizationTrace,
    pub runs: Vec<EtaRun>,
}

impl EtaSweep {
    pub fn distances(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.hausdorff_to_reference).collect()
    }

    /// First level from which the distances never increase.
    pub fn monotone_from(&self) -> usize {
        monotone_tail_start(&self.distances())
    }
}

/// Reconstructions for `η_n = η₀ 2^{−n}`, `n = 0..=levels`, compared with
/// the `η = 0` reconstruction from the same start and data.
pub fn eta_sweep(
    problem: &Problem,
    initial: &RadialShape,
    config: &OptimizerConfig,
    eta0: f64,
    levels: usize,
) -> Result<EtaSweep> {
    if !(eta0 > 0.0) {
        return Err(Error::InvalidArgument(format!("eta0 must be positive, got {eta0}")));
    }
    let run = |eta: f64| {
        let cfg = OptimizerConfig {
            eta,
            ..config.clone()
        };
        minimize_with_reference(problem, initial, &cfg, None)
    };
    let reference = run(0.0)?;
    let ref_shape = reference.final_shape();
    let runs = (0..=levels)
        .into_par_iter()
        .map(|n| {
            let eta = eta0 * 0.5f64.powi(n as i32);
            let trace = run(eta)?;
            let d = hausdorff_distance(&trace.final_shape(), &ref_shape, HAUSDORFF_SAMPLES)?;
            Ok(EtaRun {
                eta,
                trace,
                hausdorff_to_reference: d,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EtaSweep { reference, runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRun {
    pub noise_level: f64,
    pub seed: u64,
    pub eta: f64,
    pub hausdorff: f64,
    /// `Σ_{k ≥ k_high}(a_k² + b_k²)` of the final shape.
    pub high_mode_energy: f64,
    pub iterations: usize,
    pub termination: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySummary {
    pub noise_level: f64,
    pub median_plain: f64,
    pub median_penalized: f64,
    /// Seeds where penalization strictly lowered the high-mode energy.
    pub energy_reduced: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityStudy {
    pub eta: f64,
    pub k_high: usize,
    pub runs: Vec<StabilityRun>,
    pub summaries: Vec<StabilitySummary>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Reconstructions with and without penalization over noise levels and
/// seeds, measured against the truth.
pub fn stability_study(
    scenario: &Scenario,
    initial: &RadialShape,
    config: &OptimizerConfig,
    eta: f64,
    noise_levels: &[f64],
    seeds: &[u64],
    k_high: usize,
) -> Result<StabilityStudy> {
    if noise_levels.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("noise levels and seeds must be nonempty".into()));
    }
    let jobs: Vec<(f64, u64, f64)> = noise_levels
        .iter()
        .flat_map(|&noise| seeds.iter().flat_map(move |&seed| [(noise, seed, 0.0), (noise, seed, eta)]))
        .collect();
    let runs: Vec<StabilityRun> = jobs
        .par_iter()
        .map(|&(noise, seed, eta)| {
            let problem = scenario.with_noise(noise, seed).problem()?;
            let cfg = OptimizerConfig {
                eta,
                ..config.clone()
            };
            let trace = minimize_with_reference(&problem, initial, &cfg, Some(&scenario.truth))?;
            let shape = trace.final_shape();
            Ok(StabilityRun {
                noise_level: noise,
                seed,
                eta,
                hausdorff: trace.final_record().hausdorff.expect("reference given"),
                high_mode_energy: shape.mode_energy_from(k_high),
                iterations: trace.iterations(),
                termination: trace.termination.as_str(),
            })
        })
        .collect::<Result<_>>()?;
    let summaries = noise_levels
        .iter()
        .map(|&noise| {
            let at = |penalized: bool| -> Vec<&StabilityRun> {
                runs.iter()
                    .filter(|r| r.noise_level == noise && (r.eta != 0.0) == penalized)
                    .collect()
            };
            let (plain, pen) = (at(false), at(true));
            let d = |rs: &[&StabilityRun]| median(&rs.iter().map(|r| r.hausdorff).collect::<Vec<_>>());
            let energy_reduced = plain
                .iter()
                .zip(&pen)
                .filter(|(p, q)| q.high_mode_energy < p.high_mode_energy)
                .count();
            StabilitySummary {
                noise_level: noise,
                median_plain: d(&plain),
                median_penalized: d(&pen),
                energy_reduced,
                seeds: seeds.len(),
            }
        })
        .collect();
    Ok(StabilityStudy {
        eta,
        k_high,
        runs,
        summaries,
    })
}
