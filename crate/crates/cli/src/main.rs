//! `obstacle`: experiments for the Dirichlet inverse obstacle problem.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::{parse_overrides, ExperimentConfig, RawConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "obstacle", version, about = "Shape reconstruction experiments for the inverse obstacle problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the state on one shape and compare with the Bessel solution when concentric.
    Forward(RunArgs),
    /// Compare the adjoint gradient with central finite differences.
    GradientCheck(RunArgs),
    /// Hessian spectra at a near-critical shape.
    HessianSpectrum(RunArgs),
    /// Full reconstruction with the ε-cone comparison.
    Reconstruct(RunArgs),
    /// Reconstructions for a halving sequence of perimeter weights.
    EtaSweep(RunArgs),
    /// Noise ensembles with and without perimeter penalization.
    StabilityStudy(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Forward(_) => "forward",
            Self::GradientCheck(_) => "gradient-check",
            Self::HessianSpectrum(_) => "hessian-spectrum",
            Self::Reconstruct(_) => "reconstruct",
            Self::EtaSweep(_) => "eta-sweep",
            Self::StabilityStudy(_) => "stability-study",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Self::Forward(a)
            | Self::GradientCheck(a)
            | Self::HessianSpectrum(a)
            | Self::Reconstruct(a)
            | Self::EtaSweep(a)
            | Self::StabilityStudy(a) => a,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Line-based `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (the `out` key).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Per-key overrides: `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

/// Configuration and worker count; `--config` and `--jobs` may also
/// appear among the trailing overrides.
fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, Option<usize>), CliError> {
    let mut pairs = parse_overrides(&args.overrides)?;
    let mut config_path = args.config.clone();
    let mut jobs = args.jobs;
    let mut remaining = Vec::with_capacity(pairs.len());
    for (key, value) in pairs.drain(..) {
        match key.as_str() {
            "config" => config_path = Some(PathBuf::from(value)),
            "jobs" => {
                jobs = Some(
                    value
                        .parse()
                        .map_err(|_| CliError::Config(format!("command line: invalid value `{value}` for `jobs`")))?,
                )
            }
            _ => remaining.push((key, value)),
        }
    }
    let mut raw = RawConfig::default();
    if let Some(path) = &config_path {
        raw.apply_file(path)?;
    }
    raw.apply_overrides(&remaining)?;
    if let Some(out) = &args.out {
        let out = out
            .to_str()
            .ok_or_else(|| CliError::Config("output path is not valid UTF-8".into()))?;
        raw.set_flag("out", out)?;
    }
    Ok((ExperimentConfig::from_raw(&raw)?, jobs))
}

fn write_manifest(cfg: &ExperimentConfig, subcommand: &str, outcome: &Outcome, out: &Path) -> Result<(), CliError> {
    fs::write(out.join("config.txt"), &cfg.canonical)?;
    let mut f = fs::File::create(out.join("manifest.txt"))?;
    writeln!(f, "subcommand = {subcommand}")?;
    writeln!(f, "obstacle_cli_version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "obstacle_core_version = {}", obstacle_core::VERSION)?;
    writeln!(f, "config_sha256 = {}", cfg.hash)?;
    let status = if outcome.failures.is_empty() { "ok" } else { "assertion-failed" };
    writeln!(f, "status = {status}")?;
    writeln!(f, "files = config.txt")?;
    for file in &outcome.files {
        writeln!(f, "files = {}", file.display())?;
    }
    Ok(())
}

fn run(command: &Command) -> Result<(), CliError> {
    let args = command.args();
    let (cfg, jobs) = load_config(args)?;
    if let Some(jobs) = jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))?;
    }
    let out = cfg.out.clone();
    fs::create_dir_all(&out)?;
    let outcome = match command {
        Command::Forward(_) => commands::forward(&cfg, &out),
        Command::GradientCheck(_) => commands::gradient_check(&cfg, &out),
        Command::HessianSpectrum(_) => commands::hessian_spectrum(&cfg, &out),
        Command::Reconstruct(_) => commands::reconstruct(&cfg, &out),
        Command::EtaSweep(_) => commands::eta_sweep_cmd(&cfg, &out),
        Command::StabilityStudy(_) => commands::stability(&cfg, &out),
    }?;
    write_manifest(&cfg, command.name(), &outcome, &out)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    println!("output: {}", out.display());
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assertion(outcome.failures.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
