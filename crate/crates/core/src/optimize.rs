//! Steepest descent on the radial Fourier coefficients with an Armijo
//! line search that rejects inadmissible trial shapes.

use std::io::Write;

use crate::error::{Error, Result};
use crate::functionals::{evaluate, ObjectiveValue, Problem};
use crate::geometry::{check_epsilon_cone, hausdorff_distance, HoldAll, RadialShape};
use crate::meshing::{build_mesh_with, MeshOptions};
use crate::shape_calculus::{ShapeContext, Weights};

/// Boundary samples used by the cone sampler inside the optimizer.
const CONE_BOUNDARY_SAMPLES: usize = 64;
const CONE_STENCIL_SAMPLES: usize = 25;
/// Boundary samples for Hausdorff distances in traces.
const HAUSDORFF_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub eta: f64,
    /// Activates the ε-cone check in the line search.
    pub epsilon_cone: Option<f64>,
    pub max_iters: usize,
    /// Sufficient-decrease fraction of the Armijo rule.
    pub armijo_c: f64,
    /// Step reduction factor per backtrack.
    pub backtrack: f64,
    /// Largest coefficient change of the first trial step.
    pub initial_step: f64,
    /// Largest coefficient change of any trial step.
    pub max_displacement: f64,
    /// Stops when the active gradient norm falls below this.
    pub grad_tol: f64,
    /// Stops when the accepted coefficient change falls below this.
    pub step_tol: f64,
    /// Number of active Fourier modes; higher modes stay frozen.
    pub k_active: usize,
    /// Grows the active set from 2 modes up to `k_active`, one mode each
    /// time the current set stalls.
    pub mode_schedule: bool,
    /// Smallest accepted mesh angle, in degrees.
    pub min_mesh_angle: f64,
    /// Trial steps from the Barzilai–Borwein formula.
    pub barzilai_borwein: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 0.0,
            epsilon_cone: None,
            max_iters: 300,
            armijo_c: 1e-4,
            backtrack: 0.5,
            initial_step: 0.02,
            max_displacement: 0.05,
            grad_tol: 1e-7,
            step_tol: 1e-10,
            k_active: 8,
            mode_schedule: false,
            min_mesh_angle: 5.0,
            barzilai_borwein: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.eta >= 0.0) {
            return bad("eta must be >= 0");
        }
        if let Some(eps) = self.epsilon_cone {
            if !(eps > 0.0) {
                return bad("epsilon_cone must be positive");
            }
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.max_displacement > 0.0) {
            return bad("step sizes must be positive");
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.min_mesh_angle >= 0.0 && self.min_mesh_angle < 60.0) {
            return bad("min_mesh_angle must lie in [0, 60)");
        }
        Ok(())
    }
}

/// Admissibility of one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdmissibilityFlags {
    pub inside_k: bool,
    pub above_rmin: bool,
    pub mesh_quality: bool,
    /// `None` when no ε-cone constraint is active.
    pub cone: Option<bool>,
}

impl AdmissibilityFlags {
    pub fn ok(&self) -> bool {
        self.inside_k && self.above_rmin && self.mesh_quality && self.cone.unwrap_or(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub coefficients: Vec<f64>,
    pub value: ObjectiveValue,
    /// Norm of the gradient restricted to the active modes.
    pub gradient_norm: f64,
    /// Step length that produced this iterate; zero for the start.
    pub step: f64,
    pub backtracks: usize,
    pub k_active: usize,
    pub flags: AdmissibilityFlags,
    pub hausdorff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    StepCollapse,
    MaxIterations,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GradientTolerance => "gradient-tolerance",
            Self::StepCollapse => "step-collapse",
            Self::MaxIterations => "max-iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl OptimizationTrace {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("trace holds the initial iterate")
    }

    pub fn final_shape(&self) -> RadialShape {
        RadialShape::from_coefficients(&self.final_record().coefficients)
            .expect("trace iterates are valid shapes")
    }

    /// Number of accepted steps.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "iteration,total,misfit,perimeter,step,gradient_norm,hausdorff,k_active,backtracks,inside_k,above_rmin,mesh_quality,cone"
        )?;
        let flag = |b: bool| if b { "1" } else { "0" };
        for r in &self.records {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{},{},{},{},{}",
                r.iteration,
                r.value.total,
                r.value.misfit,
                r.value.perimeter,
                r.step,
                r.gradient_norm,
                r.hausdorff.map_or_else(String::new, |d| format!("{d:.17e}")),
                r.k_active,
                r.backtracks,
                flag(r.flags.inside_k),
                flag(r.flags.above_rmin),
                flag(r.flags.mesh_quality),
                r.flags.cone.map_or("", flag),
            )?;
        }
        Ok(())
    }
}

/// Admissibility flags of `shape` for the problem and configuration.
pub fn admissibility_flags(problem: &Problem, shape: &RadialShape, config: &OptimizerConfig) -> AdmissibilityFlags {
    let adm = problem.domain.admissibility(shape, problem.resolution.n_theta);
    let geometric = adm.ok();
    let mesh_quality = geometric
        && build_mesh_with(
            shape,
            &problem.domain,
            problem.resolution.n_radial,
            problem.resolution.n_angular,
            MeshOptions {
                grading: problem.resolution.grading,
                phase: 0.0,
            },
        )
        .map(|m| m.quality().min_angle_degrees() >= config.min_mesh_angle)
        .unwrap_or(false);
    let cone = config.epsilon_cone.map(|eps| {
        geometric
            && check_epsilon_cone(shape, eps, CONE_BOUNDARY_SAMPLES, CONE_STENCIL_SAMPLES)
                .map(|c| c.passed)
                .unwrap_or(false)
    });
    AdmissibilityFlags {
        inside_k: adm.inside_k,
        above_rmin: adm.above_rmin,
        mesh_quality,
        cone,
    }
}

struct Iterate {
    coeffs: Vec<f64>,
    value: ObjectiveValue,
    gradient: Vec<f64>,
    flags: AdmissibilityFlags,
}

fn active_mask(len: usize, k_max: usize, k_active: usize) -> Vec<bool> {
    (0..len)
        .map(|c| {
            let k = if c > k_max { c - k_max } else { c };
            k <= k_active
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes `ℒ_η` from `initial`.
pub fn minimize(problem: &Problem, initial: &RadialShape, config: &OptimizerConfig) -> Result<OptimizationTrace> {
    minimize_with_reference(problem, initial, config, None)
}

/// As [`minimize`], recording the Hausdorff distance of every iterate to
/// `reference`.
pub fn minimize_with_reference(
    problem: &Problem,
    initial: &RadialShape,
    config: &OptimizerConfig,
    reference: Option<&RadialShape>,
) -> Result<OptimizationTrace> {
    config.validate()?;
    let k_max = initial.mode_count().max(config.k_active);
    let initial = initial.with_mode_count(k_max)?;
    let flags = admissibility_flags(problem, &initial, config);
    if !flags.ok() {
        return Err(Error::Inadmissible(format!("initial shape fails admissibility: {flags:?}")));
    }
    let weights = Weights::penalized(config.eta);
    let distance = |s: &RadialShape| -> Result<Option<f64>> {
        reference.map(|r| hausdorff_distance(s, r, HAUSDORFF_SAMPLES)).transpose()
    };
    let gradient_of = |shape: &RadialShape| -> Result<(ObjectiveValue, Vec<f64>)> {
        let report = ShapeContext::new(problem, shape)?.gradient(weights)?;
        Ok((report.value, report.coeff_gradient))
    };

    let mut k_active = if config.mode_schedule {
        config.k_active.min(2)
    } else {
        config.k_active
    };
    let mut mask = active_mask(2 * k_max + 1, k_max, k_active);
    let (value, gradient) = gradient_of(&initial)?;
    let mut current = Iterate {
        coeffs: initial.coefficients(),
        value,
        gradient,
        flags,
    };
    let masked = |g: &[f64], mask: &[bool]| -> Vec<f64> {
        g.iter().zip(mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect()
    };
    let mut records = vec![IterationRecord {
        iteration: 0,
        coefficients: current.coeffs.clone(),
        value: current.value,
        gradient_norm: norm(&masked(&current.gradient, &mask)),
        step: 0.0,
        backtracks: 0,
        k_active,
        flags: current.flags,
        hausdorff: distance(&initial)?,
    }];

    // previous accepted displacement and gradient change, for BB steps
    let mut history: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut termination = Termination::MaxIterations;
    let mut iteration = 0;
    while iteration < config.max_iters {
        let g = masked(&current.gradient, &mask);
        let g_norm = norm(&g);
        let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let stalled = if g_norm < config.grad_tol {
            Some(Termination::GradientTolerance)
        } else {
            None
        };
        let outcome = match stalled {
            Some(t) => Err(t),
            None => line_search(problem, config, &current, &g, g_inf, history.as_ref()),
        };
        match outcome {
            Ok((next, alpha, backtracks)) => {
                let s: Vec<f64> = next.coeffs.iter().zip(&current.coeffs).map(|(a, b)| a - b).collect();
                let step_len = norm(&s);
                let y: Vec<f64> = masked(&next.gradient, &mask)
                    .iter()
                    .zip(&g)
                    .map(|(a, b)| a - b)
                    .collect();
                history = Some((s, y));
                iteration += 1;
                let shape = RadialShape::from_coefficients(&next.coeffs)?;
                records.push(IterationRecord {
                    iteration,
                    coefficients: next.coeffs.clone(),
                    value: next.value,
                    gradient_norm: norm(&masked(&next.gradient, &mask)),
                    step: alpha,
                    backtracks,
                    k_active,
                    flags: next.flags,
                    hausdorff: distance(&shape)?,
                });
                current = next;
                if step_len < config.step_tol {
                    if !advance_schedule(config, &mut k_active, &mut mask, k_max) {
                        termination = Termination::StepCollapse;
                        break;
                    }
                    history = None;
                }
            }
            Err(reason) => {
                if advance_schedule(config, &mut k_active, &mut mask, k_max) {
                    history = None;
                    continue;
                }
                termination = reason;
                break;
            }
        }
    }
    Ok(OptimizationTrace { records, termination })
}

fn advance_schedule(config: &OptimizerConfig, k_active: &mut usize, mask: &mut Vec<bool>, k_max: usize) -> bool {
    if config.mode_schedule && *k_active < config.k_active {
        *k_active += 1;
        *mask = active_mask(mask.len(), k_max, *k_active);
        true
    } else {
        false
    }
}

/// Backtracking along `−g`; returns the accepted iterate, its step and
/// the number of backtracks, or the reason for giving up.
fn line_search(
    problem: &Problem,
    config: &OptimizerConfig,
    current: &Iterate,
    g: &[f64],
    g_inf: f64,
    history: Option<&(Vec<f64>, Vec<f64>)>,
) -> std::result::Result<(Iterate, f64, usize), Termination> {
    let g_sq: f64 = g.iter().map(|v| v * v).sum();
    let mut alpha = match history {
        Some((s, y)) if config.barzilai_borwein => {
            let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|v| v * v).sum();
            if sy > 0.0 {
                ss / sy
            } else {
                config.initial_step / g_inf
            }
        }
        _ => config.initial_step / g_inf,
    };
    alpha = alpha.min(config.max_displacement / g_inf);
    let weights = Weights::penalized(config.eta);
    let mut backtracks = 0;
    loop {
        if alpha * g_inf < config.step_tol {
            return Err(Termination::StepCollapse);
        }
        let coeffs: Vec<f64> = current.coeffs.iter().zip(g).map(|(c, d)| c - alpha * d).collect();
        if let Ok(shape) = RadialShape::from_coefficients(&coeffs) {
            let flags = admissibility_flags(problem, &shape, config);
            if flags.ok() {
                if let Ok(value) = evaluate(problem, &shape, config.eta) {
                    if value.total <= current.value.total - config.armijo_c * alpha * g_sq {
                        let gradient = ShapeContext::new(problem, &shape)
                            .and_then(|ctx| ctx.gradient(weights))
                            .map_err(|_| Termination::StepCollapse)?;
                        return Ok((
                            Iterate {
                                coeffs,
                                value,
                                gradient: gradient.coeff_gradient,
                                flags,
                            },
                            alpha,
                            backtracks,
                        ));
                    }
                }
            }
        }
        alpha *= config.backtrack;
        backtracks += 1;
    }
}

/// Pulls `shape` into the band `[r_min + margin, R_K − margin]` by a uniform
/// shrink of its `k ≥ 1` coefficients; with `epsilon_cone`, keeps shrinking
/// until the cone sampler passes. Shapes already inside are returned as is.
pub fn project_admissible(
    shape: &RadialShape,
    domain: &HoldAll,
    epsilon_cone: Option<f64>,
    margin: f64,
    n_samples: usize,
) -> Result<RadialShape> {
    let lo = domain.r_min() + margin;
    let hi = domain.r_k() - margin;
    let r0 = shape.r0();
    if !(r0 > lo && r0 < hi) {
        return Err(Error::Inadmissible(format!(
            "mean radius {r0} outside [{lo}, {hi}]; no circle is admissible"
        )));
    }
    let mut factor = 1.0f64;
    for r in shape.radius_field(n_samples)?.samples() {
        let dev = r - r0;
        if dev > 0.0 && *r > hi {
            factor = factor.min((hi - r0) / dev);
        } else if dev < 0.0 && *r < lo {
            factor = factor.min((r0 - lo) / -dev);
        }
    }
    let mut projected = if factor < 1.0 { shrink(shape, factor)? } else { shape.clone() };
    if let Some(eps) = epsilon_cone {
        let passes = |s: &RadialShape| -> Result<bool> {
            Ok(check_epsilon_cone(s, eps, CONE_BOUNDARY_SAMPLES, CONE_STENCIL_SAMPLES)?.passed)
        };
        let mut tries = 0;
        while !passes(&projected)? {
            tries += 1;
            if tries > 60 {
                return Err(Error::Inadmissible(format!(
                    "no shrink of the shape satisfies the {eps}-cone check"
                )));
            }
            factor *= 0.8;
            projected = shrink(shape, factor)?;
        }
    }
    Ok(projected)
}

fn shrink(shape: &RadialShape, factor: f64) -> Result<RadialShape> {
    let scale = |v: &[f64]| v.iter().map(|c| c * factor).collect::<Vec<_>>();
    RadialShape::new(shape.r0(), scale(shape.cos_coeffs()), scale(shape.sin_coeffs()))
}
