//! Adjoint-based first and second shape derivatives of the penalized
//! misfit, in the radial Fourier coefficients of the obstacle.
//!
//! Conventions: ν on ∂ω points out of ω, and a normal perturbation `h`
//! moves ∂ω to `x + h(x)ν(x)`. With the state `u` (`u = 0` on ∂ω,
//! `∂_n u = g_N` on ∂Ω) and the adjoint `w` (`w = 0` on ∂ω,
//! `∂_n w = u − g_D` on ∂Ω):
//!
//! ```text
//! Dℒ_η·h      = ∫_{∂ω} (−∂_ν u ∂_ν w + η H) h
//! u'          : u' = −∂_ν u h on ∂ω,  ∂_n u' = 0 on ∂Ω
//! w'          : w' = −∂_ν w h on ∂ω,  ∂_n w' = u' on ∂Ω
//! D²ℒ_η[h, h] = −∫_{∂ω} ∂_ν u ∂_ν w' h + η ∫_{∂ω} |∂_τ h|²
//! ```
//!
//! The minus signs come from measuring fluxes along ν rather than along
//! the outward normal of the annulus. The second-derivative expression
//! is exact at critical shapes; elsewhere it omits the terms that vanish
//! there. In two dimensions the zeroth-order curvature terms of the
//! perimeter Hessian cancel, leaving the tangential Dirichlet energy.
//!
//! Radial coefficient perturbations `δ` enter through `h = δ (e_r·ν)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::{grid_angle, BoundaryField};
use crate::functionals::{evaluate, relative_perimeter, solve_forward, ObjectiveValue, Problem, StateSolution};
use crate::geometry::{basis_norm_squared, RadialShape, SobolevExponent};
use crate::pde::NodalField;

/// Relative symmetry tolerance of an assembled Hessian.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Relative weights of the two parts of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub misfit: f64,
    pub eta: f64,
}

impl Weights {
    pub fn penalized(eta: f64) -> Self {
        Self { misfit: 1.0, eta }
    }

    pub fn perimeter_only(eta: f64) -> Self {
        Self { misfit: 0.0, eta }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// `G = −∂_ν u ∂_ν w + η H` at the inner mesh nodes.
    pub density: BoundaryField,
    /// Gradient over `(r0, a_1..a_K, b_1..b_K)`.
    pub coeff_gradient: Vec<f64>,
    pub fd_relative_error: Option<f64>,
    pub value: ObjectiveValue,
}

impl GradientReport {
    pub fn norm(&self) -> f64 {
        self.coeff_gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Radial basis function `index` of `(1, cos θ..cos Kθ, sin θ..sin Kθ)`.
pub fn basis_function(index: usize, k: usize, theta: f64) -> f64 {
    basis_value_and_derivative(index, k, theta).0
}

fn basis_value_and_derivative(index: usize, k: usize, theta: f64) -> (f64, f64) {
    if index == 0 {
        (1.0, 0.0)
    } else if index <= k {
        let m = index as f64;
        ((m * theta).cos(), -m * (m * theta).sin())
    } else {
        let m = (index - k) as f64;
        ((m * theta).sin(), m * (m * theta).cos())
    }
}

/// State, adjoint and their fluxes at one shape.
#[derive(Debug, Clone)]
pub struct ShapeContext<'p> {
    pub problem: &'p Problem,
    pub state: StateSolution,
    pub w: NodalField,
    pub flux_u: BoundaryField,
    pub flux_w: BoundaryField,
}

impl<'p> ShapeContext<'p> {
    pub fn new(problem: &'p Problem, shape: &RadialShape) -> Result<Self> {
        let state = solve_forward(problem, shape)?;
        let w = solve_adjoint(&state)?;
        let flux_u = state.system.inner_flux(&state.u, &problem.data.g_n)?;
        let flux_w = state.system.inner_flux(&w, &state.residual)?;
        Ok(Self {
            problem,
            state,
            w,
            flux_u,
            flux_w,
        })
    }

    pub fn shape(&self) -> &RadialShape {
        &self.state.shape
    }

    fn n_angular(&self) -> usize {
        self.problem.resolution.n_angular
    }

    fn n_theta(&self) -> usize {
        self.problem.resolution.n_theta
    }

    pub fn value(&self, eta: f64) -> ObjectiveValue {
        ObjectiveValue::new(
            self.state.misfit,
            relative_perimeter(self.shape(), &self.problem.domain, self.n_theta()),
            eta,
        )
    }

    /// Normal component `δ (e_r·ν)` of a radial perturbation at the inner
    /// nodes.
    pub fn normal_component(&self, delta: &BoundaryField) -> Result<BoundaryField> {
        let n = self.n_angular();
        let shape = self.shape();
        BoundaryField::from_samples(
            (0..n)
                .map(|j| {
                    let t = grid_angle(j, n);
                    delta.eval(t) * shape.radial_normal_factor(t)
                })
                .collect(),
        )
    }

    pub fn gradient(&self, weights: Weights) -> Result<GradientReport> {
        let shape = self.shape();
        let n = self.n_angular();
        let k = shape.mode_count();
        let misfit_density: Vec<f64> = self
            .flux_u
            .samples()
            .iter()
            .zip(self.flux_w.samples())
            .map(|(a, b)| -weights.misfit * a * b)
            .collect();
        let density = BoundaryField::from_samples(
            misfit_density
                .iter()
                .enumerate()
                .map(|(j, g)| g + weights.eta * shape.curvature(grid_angle(j, n)))
                .collect(),
        )?;

        let mut grad = vec![0.0; 2 * k + 1];
        if weights.misfit != 0.0 {
            // paired on the mesh polygon, consistently with the discrete
            // Green identity behind the adjoint
            for (c, slot) in grad.iter_mut().enumerate() {
                let h: Vec<f64> = (0..n)
                    .map(|j| {
                        let t = grid_angle(j, n);
                        basis_function(c, k, t) * shape.radial_normal_factor(t)
                    })
                    .collect();
                *slot = self.state.system.inner_pairing(&misfit_density, &h);
            }
        }
        if weights.eta != 0.0 {
            for (slot, p) in grad.iter_mut().zip(perimeter_gradient(shape, self.n_theta())) {
                *slot += weights.eta * p;
            }
        }
        let mut value = self.value(weights.eta);
        value.misfit *= weights.misfit;
        value.total = value.misfit + weights.eta * value.perimeter;
        Ok(GradientReport {
            density,
            coeff_gradient: grad,
            fd_relative_error: None,
            value,
        })
    }

    /// Dℒ·δ through the adjoint, `−∫_{∂ω} ∂_ν u ∂_ν w h`, paired with the
    /// inner boundary mass matrix.
    pub fn adjoint_directional_derivative(&self, delta: &BoundaryField) -> Result<f64> {
        let h = self.normal_component(delta)?;
        let weighted = self.flux_u.zip_with(&h, |f, h| f * h)?;
        Ok(-self
            .state
            .system
            .inner_pairing(weighted.samples(), self.flux_w.samples()))
    }

    /// Dℒ·δ through the state derivative, `∫_{∂Ω} u' (u − g_D)`.
    ///
    /// Agrees with [`Self::adjoint_directional_derivative`] up to the
    /// linear solver tolerance.
    pub fn direct_directional_derivative(&self, delta: &BoundaryField) -> Result<f64> {
        let h = self.normal_component(delta)?;
        let u_prime = self.u_prime(&h)?;
        Ok(self.state.system.boundary_pairing(&self.state.residual, &u_prime))
    }

    /// Shape derivative of the state for the normal perturbation `h`.
    pub fn u_prime(&self, h: &BoundaryField) -> Result<NodalField> {
        let data = self.flux_u.zip_with(h, |f, h| -f * h)?;
        self.state
            .system
            .solve(&BoundaryField::zeros(self.n_angular())?, &data)
    }

    /// Shape derivative of the adjoint for the normal perturbation `h`.
    pub fn w_prime(&self, u_prime: &NodalField, h: &BoundaryField) -> Result<(NodalField, BoundaryField)> {
        let neumann = self.state.system.outer_trace(u_prime)?;
        let data = self.flux_w.zip_with(h, |f, h| -f * h)?;
        let w_prime = self.state.system.solve(&neumann, &data)?;
        Ok((w_prime, neumann))
    }

    /// Nodal values of `−∂_ν u ∂_ν w'` for the normal perturbation `h`.
    fn hessian_density(&self, h: &BoundaryField) -> Result<Vec<f64>> {
        let u_prime = self.u_prime(h)?;
        let (w_prime, neumann) = self.w_prime(&u_prime, h)?;
        let flux_wp = self.state.system.inner_flux(&w_prime, &neumann)?;
        Ok(self
            .flux_u
            .samples()
            .iter()
            .zip(flux_wp.samples())
            .map(|(a, b)| -a * b)
            .collect())
    }

    /// `D²ℒ_η[h, h]` for the radial perturbation `δ`.
    pub fn hessian_apply(&self, delta: &BoundaryField, weights: Weights) -> Result<f64> {
        let h = self.normal_component(delta)?;
        let mut value = 0.0;
        if weights.misfit != 0.0 {
            let density = self.hessian_density(&h)?;
            value += weights.misfit * self.state.system.inner_pairing(&density, h.samples());
        }
        if weights.eta != 0.0 {
            let n = self.n_theta();
            let derivs: Vec<f64> = (0..n)
                .map(|q| {
                    let t = grid_angle(q, n);
                    normal_derivative(self.shape(), delta.eval(t), delta.eval_derivative(t), t)
                })
                .collect();
            value += weights.eta * tangential_energy(self.shape(), &derivs, &derivs);
        }
        Ok(value)
    }
}

/// d/dθ of `h = δ r/f`, `f = √(r² + r'²)`.
fn normal_derivative(shape: &RadialShape, delta: f64, delta_theta: f64, theta: f64) -> f64 {
    let (r, r1, r2) = shape.radius_derivatives(theta);
    let f2 = r * r + r1 * r1;
    let f = f2.sqrt();
    let factor_theta = r1 * (r1 * r1 - r * r2) / (f2 * f);
    delta_theta * r / f + delta * factor_theta
}

/// `∫ ∂_τ h₁ ∂_τ h₂ ds = ∫ h₁_θ h₂_θ / f dθ` from samples of the θ-derivatives.
fn tangential_energy(shape: &RadialShape, d1: &[f64], d2: &[f64]) -> f64 {
    let n = d1.len();
    let dtheta = 2.0 * PI / n as f64;
    (0..n)
        .map(|q| d1[q] * d2[q] / shape.speed(grid_angle(q, n)))
        .sum::<f64>()
        * dtheta
}

/// Coefficient gradient of the perimeter, `∫ H (e_r·ν) φ_c ds = ∫ H r φ_c dθ`.
pub fn perimeter_gradient(shape: &RadialShape, n_theta: usize) -> Vec<f64> {
    let k = shape.mode_count();
    let dtheta = 2.0 * PI / n_theta as f64;
    let mut grad = vec![0.0; 2 * k + 1];
    for q in 0..n_theta {
        let t = grid_angle(q, n_theta);
        let w = shape.curvature(t) * shape.radius(t) * dtheta;
        for (c, slot) in grad.iter_mut().enumerate() {
            *slot += w * basis_function(c, k, t);
        }
    }
    grad
}

/// Adjoint state: Neumann datum `trace(u) − g_D`, zero on ∂ω.
pub fn solve_adjoint(state: &StateSolution) -> Result<NodalField> {
    let zero = BoundaryField::zeros(state.residual.len())?;
    state.system.solve(&state.residual, &zero)
}

/// Adjoint shape gradient of `ℒ_η` over the shape's coefficients.
pub fn shape_gradient(problem: &Problem, shape: &RadialShape, eta: f64) -> Result<GradientReport> {
    ShapeContext::new(problem, shape)?.gradient(Weights::penalized(eta))
}

/// `D²ℒ_η[h, h]` for a radial perturbation `δ`.
pub fn hessian_apply(problem: &Problem, shape: &RadialShape, eta: f64, delta: &BoundaryField) -> Result<f64> {
    ShapeContext::new(problem, shape)?.hessian_apply(delta, Weights::penalized(eta))
}

/// Error of the adjoint gradient against central differences at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct FdStep {
    pub step: f64,
    pub fd_gradient: Vec<f64>,
    /// `max_c |g_adj − g_fd| / max_c |g_fd|` over the checked components.
    pub relative_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdRegime {
    /// Every step reduction lowers the error by at least 10%.
    Decreasing,
    /// The error stops improving; the discretization floor is reached.
    Saturated,
    /// The error grows again at the smallest steps (cancellation).
    RoundoffDominated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub components: Vec<usize>,
    pub adjoint: GradientReport,
    pub steps: Vec<FdStep>,
    pub best_error: f64,
    pub best_step: f64,
    pub regime: FdRegime,
}

/// Compares the adjoint gradient with central differences of
/// [`evaluate`] along each listed coefficient (all when `None`).
pub fn verify_gradient_fd(
    problem: &Problem,
    shape: &RadialShape,
    eta: f64,
    steps: &[f64],
    components: Option<&[usize]>,
) -> Result<FdReport> {
    verify_gradient_fd_weighted(problem, shape, Weights::penalized(eta), steps, components)
}

pub fn verify_gradient_fd_weighted(
    problem: &Problem,
    shape: &RadialShape,
    weights: Weights,
    steps: &[f64],
    components: Option<&[usize]>,
) -> Result<FdReport> {
    if steps.is_empty() || steps.iter().any(|&s| !(s > 0.0)) || steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "finite-difference steps must be positive and decreasing".into(),
        ));
    }
    let mut adjoint = ShapeContext::new(problem, shape)?.gradient(weights)?;
    let coeffs = shape.coefficients();
    let components: Vec<usize> = components.map_or_else(|| (0..coeffs.len()).collect(), <[usize]>::to_vec);
    if let Some(&c) = components.iter().find(|&&c| c >= coeffs.len()) {
        return Err(Error::InvalidArgument(format!("no coefficient {c}")));
    }

    let objective = |cs: &[f64]| -> Result<f64> {
        let s = RadialShape::from_coefficients(cs)?;
        let v = evaluate(problem, &s, weights.eta)?;
        Ok(weights.misfit * v.misfit + weights.eta * v.perimeter)
    };

    let mut records = Vec::with_capacity(steps.len());
    for &step in steps {
        let fd: Vec<f64> = components
            .par_iter()
            .map(|&c| {
                let mut plus = coeffs.clone();
                let mut minus = coeffs.clone();
                plus[c] += step;
                minus[c] -= step;
                Ok((objective(&plus)? - objective(&minus)?) / (2.0 * step))
            })
            .collect::<Result<_>>()?;
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = components
            .iter()
            .zip(&fd)
            .map(|(&c, f)| (adjoint.coeff_gradient[c] - f).abs())
            .fold(0.0f64, f64::max);
        let relative_error = if scale > 0.0 {
            diff / scale
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        records.push(FdStep {
            step,
            fd_gradient: fd,
            relative_error,
        });
    }

    let (best_idx, best) = records
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.relative_error.total_cmp(&b.1.relative_error))
        .map(|(i, r)| (i, r.relative_error))
        .expect("at least one step");
    let errors: Vec<f64> = records.iter().map(|r| r.relative_error).collect();
    let regime = if errors.windows(2).all(|w| w[1] < 0.9 * w[0]) {
        FdRegime::Decreasing
    } else if errors[errors.len() - 1] > 2.0 * best {
        FdRegime::RoundoffDominated
    } else {
        FdRegime::Saturated
    };
    adjoint.fd_relative_error = Some(best);
    Ok(FdReport {
        components,
        best_step: records[best_idx].step,
        adjoint,
        steps: records,
        best_error: best,
        regime,
    })
}

/// Misfit and perimeter Hessian blocks over the radial Fourier basis
/// `(1, cos θ..cos Kθ, sin θ..sin Kθ)`, assembled once per shape.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianParts {
    pub k_basis: usize,
    /// Polarized misfit form `D²ℒ`.
    pub misfit: DMatrix<f64>,
    /// Perimeter form `∫ ∂_τ h_i ∂_τ h_j`.
    pub perimeter: DMatrix<f64>,
    /// `max |b_ij − b_ji| / max |b|` of the unpolarized misfit pairing;
    /// zero at exact critical shapes of the unpenalized misfit.
    pub raw_asymmetry: f64,
    shape: RadialShape,
}

impl HessianParts {
    /// Assembles both blocks with `2K+1` state-derivative solves and `2K+1`
    /// adjoint-derivative solves. The misfit block is skipped when
    /// `include_misfit` is false.
    pub fn assemble(ctx: &ShapeContext<'_>, k_basis: usize, include_misfit: bool) -> Result<Self> {
        let shape = ctx.shape().clone();
        if k_basis > shape.mode_count() {
            return Err(Error::InvalidArgument(format!(
                "Hessian basis of {k_basis} modes exceeds the shape's {} modes",
                shape.mode_count()
            )));
        }
        let dim = 2 * k_basis + 1;
        let n = ctx.n_angular();
        let normals: Vec<BoundaryField> = (0..dim)
            .map(|c| {
                BoundaryField::from_samples(
                    (0..n)
                        .map(|j| {
                            let t = grid_angle(j, n);
                            basis_function(c, k_basis, t) * shape.radial_normal_factor(t)
                        })
                        .collect(),
                )
            })
            .collect::<Result<_>>()?;

        let (misfit, raw_asymmetry) = if include_misfit {
            // columns are independent solves; the ordered collect keeps the
            // result independent of scheduling
            let columns: Vec<Vec<f64>> = normals
                .par_iter()
                .map(|h| ctx.hessian_density(h))
                .collect::<Result<_>>()?;
            let system = &ctx.state.system;
            let raw = DMatrix::from_fn(dim, dim, |i, c| system.inner_pairing(&columns[c], normals[i].samples()));
            let scale = raw.amax();
            let asym = (&raw - raw.transpose()).amax();
            (polarize(&raw), if scale > 0.0 { asym / scale } else { 0.0 })
        } else {
            (DMatrix::zeros(dim, dim), 0.0)
        };

        let perimeter = perimeter_hessian(&shape, k_basis, ctx.n_theta());

        Ok(Self {
            k_basis,
            misfit,
            perimeter,
            raw_asymmetry,
            shape,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.k_basis + 1
    }

    /// `misfit_weight · D²ℒ + η · D²𝒫`.
    pub fn combined(&self, weights: Weights) -> DMatrix<f64> {
        &self.misfit * weights.misfit + &self.perimeter * weights.eta
    }

    pub fn spectrum(&self, weights: Weights, s: SobolevExponent) -> Result<HessianSpectrum> {
        HessianSpectrum::from_matrix(self.combined(weights), self.k_basis, &self.shape, s)
    }
}

/// `∫ ∂_τ h_i ∂_τ h_j ds` over the radial Fourier basis with `h = δ (e_r·ν)`.
pub fn perimeter_hessian(shape: &RadialShape, k_basis: usize, n_theta: usize) -> DMatrix<f64> {
    let dim = 2 * k_basis + 1;
    let derivs: Vec<Vec<f64>> = (0..dim)
        .map(|c| {
            (0..n_theta)
                .map(|q| {
                    let t = grid_angle(q, n_theta);
                    let (v, d) = basis_value_and_derivative(c, k_basis, t);
                    normal_derivative(shape, v, d, t)
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(dim, dim, |i, j| tangential_energy(shape, &derivs[i], &derivs[j]))
}

/// `M_ij = (Q(e_i + e_j) − Q(e_i − e_j)) / 4` with `Q(x) = xᵀ B x`.
fn polarize(b: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = b.nrows();
    DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            return b[(i, i)];
        }
        let q_plus = b[(i, i)] + b[(i, j)] + b[(j, i)] + b[(j, j)];
        let q_minus = b[(i, i)] - b[(i, j)] - b[(j, i)] + b[(j, j)];
        0.25 * (q_plus - q_minus)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianSpectrum {
    pub basis_size: usize,
    pub k_basis: usize,
    /// Hessian entries over the (unnormalized) radial Fourier basis.
    pub matrix: DMatrix<f64>,
    /// Eigenvalues in the H^s-orthonormalized basis, descending.
    pub eigenvalues: Vec<f64>,
    pub norm_exponent: SobolevExponent,
    /// `min_c M_cc / ‖φ_c‖²_{H^s}` over the basis functions.
    pub rayleigh_lower_bound: f64,
    pub symmetry_defect: f64,
    /// `‖φ_c‖²_{H^s}` of each basis function.
    pub basis_norms: Vec<f64>,
    /// For each Fourier mode `k = 0..=K`, the largest eigenvalue whose
    /// eigenvector has most of its energy in mode `k`; NaN when no
    /// eigenvector is dominated by that mode.
    pub mode_eigenvalues: Vec<f64>,
}

impl HessianSpectrum {
    pub fn from_matrix(
        matrix: DMatrix<f64>,
        k_basis: usize,
        shape: &RadialShape,
        s: SobolevExponent,
    ) -> Result<Self> {
        let dim = matrix.nrows();
        let scale = matrix.amax();
        let defect = if scale > 0.0 {
            (&matrix - matrix.transpose()).amax() / scale
        } else {
            0.0
        };
        if defect > SYMMETRY_TOLERANCE {
            return Err(Error::AsymmetricHessian {
                defect,
                tolerance: SYMMETRY_TOLERANCE,
            });
        }
        let norms: Vec<f64> = (0..dim)
            .map(|c| basis_norm_squared(c, k_basis, shape, s))
            .collect();
        let scaled = DMatrix::from_fn(dim, dim, |i, j| {
            0.5 * (matrix[(i, j)] + matrix[(j, i)]) / (norms[i] * norms[j]).sqrt()
        });
        let eig = SymmetricEigen::new(scaled);
        let mut mode_eigenvalues = vec![f64::NAN; k_basis + 1];
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(i);
            let energy = |m: usize| {
                if m == 0 {
                    v[0] * v[0]
                } else {
                    v[m] * v[m] + v[m + k_basis] * v[m + k_basis]
                }
            };
            let dominant = (0..=k_basis)
                .max_by(|&a, &b| energy(a).total_cmp(&energy(b)))
                .expect("nonempty basis");
            let slot = &mut mode_eigenvalues[dominant];
            if slot.is_nan() || lambda > *slot {
                *slot = lambda;
            }
        }
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let rayleigh_lower_bound = (0..dim)
            .map(|c| matrix[(c, c)] / norms[c])
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            basis_size: dim,
            k_basis,
            matrix,
            eigenvalues,
            norm_exponent: s,
            rayleigh_lower_bound,
            symmetry_defect: defect,
            basis_norms: norms,
            mode_eigenvalues,
        })
    }

    /// `min_c M_cc / ‖φ_c‖²` over the basis functions of modes `k ≥ k_min`.
    pub fn rayleigh_bound_from(&self, k_min: usize) -> f64 {
        (0..self.basis_size)
            .filter(|&c| {
                let k = if c > self.k_basis { c - self.k_basis } else { c };
                k >= k_min
            })
            .map(|c| self.matrix[(c, c)] / self.basis_norms[c])
            .fold(f64::INFINITY, f64::min)
    }

    /// Diagonal entry of the H^s-normalized matrix for each Fourier mode
    /// `k = 0..=K`, averaging the cosine and sine entries.
    pub fn modal_diagonal(&self, shape: &RadialShape) -> Vec<f64> {
        let k = self.k_basis;
        let norm = |c| basis_norm_squared(c, k, shape, self.norm_exponent);
        let mut out = vec![self.matrix[(0, 0)] / norm(0)];
        for m in 1..=k {
            let (c, s) = (m, m + k);
            out.push(0.5 * (self.matrix[(c, c)] / norm(c) + self.matrix[(s, s)] / norm(s)));
        }
        out
    }
}

/// Largest second difference of `ln v_k`; nonpositive for a log-concave
/// sequence of positive values.
pub fn log_concavity_defect(values: &[f64]) -> f64 {
    values
        .windows(3)
        .map(|w| w[2].ln() - 2.0 * w[1].ln() + w[0].ln())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Assembles the Hessian of `ℒ_η` over `2K+1` basis functions and its
/// spectrum in the H^s-normalized basis.
pub fn assemble_hessian(
    problem: &Problem,
    shape: &RadialShape,
    eta: f64,
    k_basis: usize,
    s: SobolevExponent,
) -> Result<HessianSpectrum> {
    let ctx = ShapeContext::new(problem, shape)?;
    HessianParts::assemble(&ctx, k_basis, true)?.spectrum(Weights::penalized(eta), s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polarization_symmetrizes() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        let m = polarize(&b);
        assert_eq!(m[(0, 1)], 3.0);
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(m[(1, 1)], 3.0);
    }

    #[test]
    fn perimeter_gradient_on_circle() {
        for rho in [0.3, 0.5, 0.7] {
            let c = RadialShape::circle_with_modes(rho, 4).unwrap();
            let g = perimeter_gradient(&c, 256);
            assert!((g[0] - 2.0 * PI).abs() < 1e-10);
            assert!(g[1..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn perimeter_gradient_matches_fd_of_arc_length() {
        let s = RadialShape::new(0.5, vec![0.03, 0.1, 0.0], vec![0.0, -0.02, 0.01]).unwrap();
        let g = perimeter_gradient(&s, 256);
        let c = s.coefficients();
        for i in 0..c.len() {
            let t = 1e-6;
            let (mut p, mut m) = (c.clone(), c.clone());
            p[i] += t;
            m[i] -= t;
            let fd = (RadialShape::from_coefficients(&p).unwrap().perimeter(256)
                - RadialShape::from_coefficients(&m).unwrap().perimeter(256))
                / (2.0 * t);
            assert!((fd - g[i]).abs() < 1e-8, "component {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn normal_derivative_on_circle_is_plain_derivative() {
        let c = RadialShape::circle(0.5).unwrap();
        assert!((normal_derivative(&c, 0.3, -1.2, 0.4) + 1.2).abs() < 1e-15);
    }

    #[test]
    fn perimeter_hessian_on_unit_circle_is_pi_k_squared() {
        let k = 8;
        let c = RadialShape::circle_with_modes(1.0, k).unwrap();
        let m = perimeter_hessian(&c, k, 256);
        for i in 0..=2 * k {
            for j in 0..=2 * k {
                let mode = if i > k { i - k } else { i } as f64;
                let expected = if i == j { PI * mode * mode } else { 0.0 };
                assert!((m[(i, j)] - expected).abs() < 1e-8, "({i},{j}) {}", m[(i, j)]);
            }
        }
    }

    #[test]
    fn perimeter_only_constant_mode_is_null() {
        let c = RadialShape::circle(0.5).unwrap();
        let m = perimeter_hessian(&c, 0, 256);
        assert_eq!(m.nrows(), 1);
        assert!(m[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn log_concavity() {
        assert!(log_concavity_defect(&[1.0, 0.5, 0.2, 0.05]) <= 0.0);
        assert!(log_concavity_defect(&[1.0, 0.1, 0.05]) > 0.0);
    }

    #[test]
    fn spectrum_of_diagonal_matrix() {
        let c = RadialShape::circle_with_modes(0.5, 2).unwrap();
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 2.0, 1.0, 2.0, 1.0]));
        let sp = HessianSpectrum::from_matrix(m, 2, &c, SobolevExponent::Zero).unwrap();
        let l2 = |c: usize| basis_norm_squared(c, 2, &RadialShape::circle_with_modes(0.5, 2).unwrap(), SobolevExponent::Zero);
        assert!((sp.eigenvalues[0] - 4.0 / l2(0)).abs() < 1e-12);
        assert!((sp.mode_eigenvalues[1] - 2.0 / l2(1)).abs() < 1e-12);
        assert!((sp.mode_eigenvalues[2] - 1.0 / l2(2)).abs() < 1e-12);
        assert!(sp.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!((sp.rayleigh_bound_from(2) - 1.0 / l2(2)).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let c = RadialShape::circle_with_modes(0.5, 1).unwrap();
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 1e-3;
        assert!(matches!(
            HessianSpectrum::from_matrix(m, 1, &c, SobolevExponent::Zero),
            Err(Error::AsymmetricHessian { .. })
        ));
    }

    #[test]
    fn basis_functions() {
        assert_eq!(basis_function(0, 3, 1.0), 1.0);
        assert!((basis_function(2, 3, 0.3) - (0.6f64).cos()).abs() < 1e-15);
        assert!((basis_function(5, 3, 0.3) - (0.6f64).sin()).abs() < 1e-15);
    }
}
