//! Subcommand bodies. Each writes its files into the output directory and
//! returns the list of written files plus any failed assertion.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use obstacle_core::experiments::{
    bessel_study, eta_sweep, mode_ratio, neumann_mode, spectrum_study, stability_study, Scenario,
    HAUSDORFF_SAMPLES,
};
use obstacle_core::functionals::{Problem, Resolution};
use obstacle_core::geometry::hausdorff_distance;
use obstacle_core::io::{
    parse_cauchy_data, write_boundary_field, write_cauchy_data, write_eigenvalues, write_fd_report,
    write_hessian_matrix, write_mesh, write_mode_eigenvalues, write_nodal_field, write_shape,
};
use obstacle_core::meshing::{build_mesh_with, MeshOptions};
use obstacle_core::optimize::{minimize, minimize_with_reference, OptimizationTrace, OptimizerConfig};
use obstacle_core::pde::FemSystem;
use obstacle_core::shape_calculus::{log_concavity_defect, verify_gradient_fd};
use obstacle_core::{RadialShape, SobolevExponent};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, FdModes};
use crate::error::CliError;

/// Largest accepted relative error of the gradient check.
pub const GRADIENT_TOLERANCE: f64 = 1e-2;

/// Latest level from which the η-sweep distances must be nonincreasing.
pub const ETA_TAIL_START: usize = 1;

/// What a subcommand produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub failures: Vec<String>,
}

impl Outcome {
    fn file(&mut self, out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(PathBuf::from(name));
        Ok(BufWriter::new(File::create(path)?))
    }

    fn note(&mut self, line: String) {
        self.summary.push(line);
    }

    fn check(&mut self, passed: bool, message: String) {
        if !passed {
            self.failures.push(message);
        }
    }

    fn write_report(&mut self, out: &Path) -> Result<(), CliError> {
        let mut f = self.file(out, "report.txt")?;
        for line in &self.summary {
            writeln!(f, "{line}")?;
        }
        for line in &self.failures {
            writeln!(f, "assertion_failed = {line}")?;
        }
        f.flush()?;
        Ok(())
    }
}

/// The configured problem; its Cauchy data are written to `data.csv`.
fn problem(cfg: &ExperimentConfig, out: &Path, outcome: &mut Outcome) -> Result<Problem, CliError> {
    let problem = match &cfg.data_file {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let data = parse_cauchy_data(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Problem::new(cfg.domain, data, cfg.resolution)
        }
        None => scenario(cfg).problem()?,
    };
    let mut f = outcome.file(out, "data.csv")?;
    write_cauchy_data(&problem.data, &mut f)?;
    f.flush()?;
    Ok(problem)
}

fn scenario(cfg: &ExperimentConfig) -> Scenario {
    Scenario {
        domain: cfg.domain,
        truth: cfg.truth.clone(),
        g_n_mode: cfg.g_n_mode,
        g_n_amplitude: cfg.g_n_amplitude,
        noise_level: cfg.noise_level,
        seed: cfg.seed,
        fine_factor: cfg.fine_factor,
        resolution: cfg.resolution,
    }
}

fn write_trace(outcome: &mut Outcome, out: &Path, dir: &str, trace: &OptimizationTrace) -> Result<(), CliError> {
    let mut f = outcome.file(out, &format!("{dir}trace.csv"))?;
    trace.write_csv(&mut f)?;
    f.flush()?;
    let mut f = outcome.file(out, &format!("{dir}shape.txt"))?;
    write_shape(&trace.final_shape(), &mut f)?;
    f.flush()?;
    Ok(())
}

fn is_centered_circle(shape: &RadialShape) -> bool {
    shape.cos_coeffs().iter().chain(shape.sin_coeffs()).all(|&a| a == 0.0)
}

pub fn forward(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let res = cfg.resolution;
    cfg.domain.check(&cfg.shape, res.n_theta)?;
    let mesh = build_mesh_with(
        &cfg.shape,
        &cfg.domain,
        res.n_radial,
        res.n_angular,
        MeshOptions {
            grading: res.grading,
            phase: 0.0,
        },
    )?;
    let system = FemSystem::new(Arc::new(mesh));
    let g_n = neumann_mode(res.n_theta, cfg.g_n_mode)?.scaled(cfg.g_n_amplitude);
    let u = system.solve(&g_n, &obstacle_core::BoundaryField::zeros(res.n_angular)?)?;
    let trace = system.outer_trace(&u)?;
    let flux = system.inner_flux(&u, &g_n)?;

    let mut f = outcome.file(out, "mesh.csv")?;
    write_mesh(system.mesh(), &mut f)?;
    f.flush()?;
    let mut f = outcome.file(out, "field.csv")?;
    write_nodal_field(&u, &mut f)?;
    f.flush()?;
    let mut f = outcome.file(out, "trace.csv")?;
    write_boundary_field(&trace, &[("boundary", "outer".into())], &mut f)?;
    f.flush()?;
    let mut f = outcome.file(out, "flux.csv")?;
    write_boundary_field(&flux, &[("boundary", "inner".into())], &mut f)?;
    f.flush()?;

    outcome.note(format!("nodes = {}", system.mesh().node_count()));
    outcome.note(format!("max_abs_u = {:.6e}", u.max_abs()));
    outcome.note(format!("max_abs_trace = {:.6e}", trace.max_abs()));
    outcome.note(format!("max_abs_flux = {:.6e}", flux.max_abs()));

    if is_centered_circle(&cfg.shape) && cfg.g_n_mode == 0 && cfg.g_n_amplitude != 0.0 && cfg.forward_levels > 0 {
        let levels: Vec<Resolution> = (0..cfg.forward_levels).map(|l| res.refined(1 << l)).collect();
        let study = bessel_study(cfg.shape.r0(), &cfg.domain, &levels)?;
        let mut f = outcome.file(out, "bessel.csv")?;
        writeln!(f, "n_radial,n_angular,l2_error,flux_error,order")?;
        for (i, level) in study.levels.iter().enumerate() {
            let order = if i == 0 {
                String::new()
            } else {
                format!("{:.6}", study.orders[i - 1])
            };
            writeln!(
                f,
                "{},{},{:.6e},{:.6e},{order}",
                level.resolution.n_radial, level.resolution.n_angular, level.l2_error, level.flux_error
            )?;
        }
        f.flush()?;
        outcome.note(format!("bessel_l2_error = {:.6e}", study.levels[0].l2_error));
        outcome.note(format!("bessel_flux_error = {:.6e}", study.levels[0].flux_error));
        if let Some(order) = study.orders.iter().copied().reduce(f64::min) {
            outcome.note(format!("convergence_order = {order:.4}"));
        }
    }
    outcome.write_report(out)?;
    Ok(outcome)
}

fn fd_components(cfg: &ExperimentConfig, k: usize) -> Result<Vec<usize>, CliError> {
    let modes: Vec<usize> = match &cfg.fd_modes {
        FdModes::All => (0..=cfg.optimizer.k_active.min(k)).collect(),
        FdModes::Modes(m) => m.clone(),
    };
    let mut components = Vec::new();
    for m in modes {
        if m > k {
            return Err(CliError::Config(format!("fd_modes: mode {m} exceeds k_max = {k}")));
        }
        if m == 0 {
            components.push(0);
        } else {
            components.extend([m, k + m]);
        }
    }
    components.sort_unstable();
    components.dedup();
    Ok(components)
}

pub fn gradient_check(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    if cfg.fd_steps.iter().any(|&s| !(s > 0.0)) || cfg.fd_steps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Config("fd_steps must be positive and strictly decreasing".into()));
    }
    let problem = problem(cfg, out, &mut outcome)?;
    let components = fd_components(cfg, cfg.shape.mode_count())?;
    let report = verify_gradient_fd(&problem, &cfg.shape, cfg.optimizer.eta, &cfg.fd_steps, Some(&components))?;
    let mut f = outcome.file(out, "gradient_check.csv")?;
    write_fd_report(&report, &mut f)?;
    f.flush()?;
    outcome.note(format!("components = {}", components.len()));
    outcome.note(format!("best_relative_error = {:.6e}", report.best_error));
    outcome.note(format!("best_step = {:e}", report.best_step));
    outcome.note(format!("regime = {:?}", report.regime));
    outcome.check(
        report.best_error <= GRADIENT_TOLERANCE,
        format!(
            "best relative gradient error {:.3e} exceeds {GRADIENT_TOLERANCE:e}",
            report.best_error
        ),
    );
    outcome.write_report(out)?;
    Ok(outcome)
}

fn exponent_tag(s: SobolevExponent) -> &'static str {
    match s {
        SobolevExponent::Zero => "0",
        SobolevExponent::Half => "0.5",
        SobolevExponent::One => "1",
    }
}

pub fn hessian_spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    if cfg.hessian_k_basis > cfg.initial.mode_count() {
        return Err(CliError::Config(format!(
            "hessian_k_basis = {} exceeds k_max = {}",
            cfg.hessian_k_basis,
            cfg.initial.mode_count()
        )));
    }
    let problem = problem(cfg, out, &mut outcome)?;
    let trace = minimize(&problem, &cfg.initial, &cfg.optimizer)?;
    write_trace(&mut outcome, out, "", &trace)?;
    let shape = trace.final_shape();
    let exponents = [SobolevExponent::Zero, SobolevExponent::One];
    let study = spectrum_study(&problem, &shape, cfg.hessian_k_basis, &cfg.hessian_etas, &exponents)?;

    let mut summary = outcome.file(out, "spectrum_summary.csv")?;
    writeln!(
        summary,
        "eta,s,lambda_1,lambda_8_ratio,rayleigh_lower_bound,symmetry_defect,log_concavity_defect_1_8"
    )?;
    for (i, (eta, s, spectrum)) in study.spectra.iter().enumerate() {
        let tag = format!("eta{}_s{}", i / exponents.len(), exponent_tag(*s));
        let mut f = outcome.file(out, &format!("spectra/eigenvalues_{tag}.csv"))?;
        writeln!(f, "# eta = {eta:e}")?;
        write_eigenvalues(spectrum, &mut f)?;
        f.flush()?;
        let mut f = outcome.file(out, &format!("spectra/modes_{tag}.csv"))?;
        write_mode_eigenvalues(spectrum, &mut f)?;
        f.flush()?;
        if *s == SobolevExponent::Zero {
            let mut f = outcome.file(out, &format!("spectra/hessian_eta{}.csv", i / exponents.len()))?;
            writeln!(f, "# eta = {eta:e}")?;
            write_hessian_matrix(spectrum, &mut f)?;
            f.flush()?;
        }
        let ratio = mode_ratio(spectrum, 8).map_or(String::new(), |r| format!("{r:.6e}"));
        let concavity = spectrum
            .mode_eigenvalues
            .get(1..=8)
            .map_or(String::new(), |v| format!("{:.6e}", log_concavity_defect(v)));
        writeln!(
            summary,
            "{eta:e},{},{:.6e},{ratio},{:.6e},{:.3e},{concavity}",
            exponent_tag(*s),
            spectrum.eigenvalues[0],
            spectrum.rayleigh_lower_bound,
            spectrum.symmetry_defect
        )?;
        outcome.note(format!(
            "eta = {eta:e}, s = {}: lambda_8/lambda_1 = {ratio}, rayleigh_lower_bound = {:.6e}, symmetry_defect = {:.3e}",
            exponent_tag(*s),
            spectrum.rayleigh_lower_bound,
            spectrum.symmetry_defect
        ));
    }
    summary.flush()?;
    outcome.note(format!(
        "critical_point: iterations = {}, termination = {}, gradient_norm = {:.3e}",
        trace.iterations(),
        trace.termination.as_str(),
        trace.final_record().gradient_norm
    ));
    outcome.write_report(out)?;
    Ok(outcome)
}

pub fn reconstruct(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let problem = problem(cfg, out, &mut outcome)?;
    let run = |epsilon_cone: Option<f64>| {
        let config = OptimizerConfig {
            epsilon_cone,
            ..cfg.optimizer.clone()
        };
        minimize_with_reference(&problem, &cfg.initial, &config, Some(&cfg.truth))
    };
    let trace = run(cfg.optimizer.epsilon_cone)?;
    write_trace(&mut outcome, out, "", &trace)?;
    let last = trace.final_record();
    outcome.note(format!("iterations = {}", trace.iterations()));
    outcome.note(format!("termination = {}", trace.termination.as_str()));
    outcome.note(format!("objective = {:.6e}", last.value.total));
    outcome.note(format!("hausdorff_to_truth = {:.6e}", last.hausdorff.unwrap_or(f64::NAN)));

    let baseline = match cfg.optimizer.epsilon_cone {
        None => trace.final_shape(),
        Some(_) => run(None)?.final_shape(),
    };
    let constrained: Vec<OptimizationTrace> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| run(Some(eps)))
        .collect::<Result<_, _>>()?;
    let mut table = outcome.file(out, "epsilon.csv")?;
    writeln!(table, "epsilon,hausdorff_to_unconstrained,hausdorff_to_truth,iterations,termination")?;
    for (i, (eps, t)) in cfg.epsilons.iter().zip(&constrained).enumerate() {
        write_trace(&mut outcome, out, &format!("runs/epsilon_{i}/"), t)?;
        let d = hausdorff_distance(&t.final_shape(), &baseline, HAUSDORFF_SAMPLES)?;
        writeln!(
            table,
            "{eps:e},{d:.6e},{:.6e},{},{}",
            t.final_record().hausdorff.unwrap_or(f64::NAN),
            t.iterations(),
            t.termination.as_str()
        )?;
        outcome.note(format!("epsilon = {eps:e}: hausdorff_to_unconstrained = {d:.6e}"));
        outcome.check(
            d < 2.0 * cfg.shape_tol,
            format!(
                "epsilon = {eps:e}: constrained result differs from unconstrained by {d:.3e} >= 2 * shape_tol"
            ),
        );
    }
    table.flush()?;
    outcome.write_report(out)?;
    Ok(outcome)
}

pub fn eta_sweep_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let problem = problem(cfg, out, &mut outcome)?;
    let sweep = eta_sweep(&problem, &cfg.initial, &cfg.optimizer, cfg.eta0, cfg.eta_levels)?;
    write_trace(&mut outcome, out, "runs/reference/", &sweep.reference)?;
    let mut table = outcome.file(out, "eta_sweep.csv")?;
    writeln!(table, "n,eta,hausdorff_to_reference,hausdorff_to_truth,iterations,termination")?;
    for (n, r) in sweep.runs.iter().enumerate() {
        write_trace(&mut outcome, out, &format!("runs/n_{n}/"), &r.trace)?;
        let to_truth = hausdorff_distance(&r.trace.final_shape(), &cfg.truth, HAUSDORFF_SAMPLES)?;
        writeln!(
            table,
            "{n},{:e},{:.6e},{to_truth:.6e},{},{}",
            r.eta,
            r.hausdorff_to_reference,
            r.trace.iterations(),
            r.trace.termination.as_str()
        )?;
    }
    table.flush()?;
    let from = sweep.monotone_from();
    outcome.note(format!("levels = {}", cfg.eta_levels));
    outcome.note(format!("nonincreasing_from = {from}"));
    outcome.check(
        from <= ETA_TAIL_START,
        format!("distances to the eta = 0 reconstruction increase after level {ETA_TAIL_START}"),
    );
    outcome.write_report(out)?;
    Ok(outcome)
}

pub fn stability(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    if cfg.data_file.is_some() {
        return Err(CliError::Config(
            "stability-study synthesizes its own data; unset data_file".into(),
        ));
    }
    if !(cfg.stability_eta > 0.0) {
        return Err(CliError::Config("stability_eta must be positive".into()));
    }
    let sc = scenario(cfg);
    let study = stability_study(
        &sc,
        &cfg.initial,
        &cfg.optimizer,
        cfg.stability_eta,
        &cfg.noise_levels,
        &cfg.seeds,
        cfg.k_high,
    )?;
    let mut table = outcome.file(out, "stability.csv")?;
    writeln!(table, "noise_level,seed,eta,hausdorff_to_truth,high_mode_energy,iterations,termination")?;
    for r in &study.runs {
        let row = format!(
            "{:e},{},{:e},{:.6e},{:.6e},{},{}",
            r.noise_level, r.seed, r.eta, r.hausdorff, r.high_mode_energy, r.iterations, r.termination
        );
        writeln!(table, "{row}")?;
        let noise_index = cfg.noise_levels.iter().position(|&n| n == r.noise_level).unwrap_or(0);
        let kind = if r.eta == 0.0 { "plain" } else { "penalized" };
        let mut f = outcome.file(out, &format!("runs/noise_{noise_index}_seed_{}_{kind}/result.csv", r.seed))?;
        writeln!(f, "noise_level,seed,eta,hausdorff_to_truth,high_mode_energy,iterations,termination")?;
        writeln!(f, "{row}")?;
        f.flush()?;
    }
    table.flush()?;
    let mut summary = outcome.file(out, "stability_summary.csv")?;
    writeln!(summary, "noise_level,median_plain,median_penalized,energy_reduced,seeds")?;
    for s in &study.summaries {
        writeln!(
            summary,
            "{:e},{:.6e},{:.6e},{},{}",
            s.noise_level, s.median_plain, s.median_penalized, s.energy_reduced, s.seeds
        )?;
        outcome.note(format!(
            "noise = {:e}: median d_H plain = {:.6e}, penalized = {:.6e}, high-mode energy reduced in {}/{}",
            s.noise_level, s.median_plain, s.median_penalized, s.energy_reduced, s.seeds
        ));
        // without noise the penalized minimizer carries a small bias
        if s.noise_level > 0.0 {
            outcome.check(
                s.median_penalized <= s.median_plain,
                format!("noise = {:e}: penalized median d_H exceeds the plain one", s.noise_level),
            );
            outcome.check(
                4 * s.energy_reduced >= 3 * s.seeds,
                format!(
                    "noise = {:e}: high-mode energy reduced in only {}/{} seeds",
                    s.noise_level, s.energy_reduced, s.seeds
                ),
            );
        }
    }
    summary.flush()?;
    outcome.write_report(out)?;
    Ok(outcome)
}
