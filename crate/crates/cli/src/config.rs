//! Line-based `key = value` configuration with flag overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use obstacle_core::functionals::Resolution;
use obstacle_core::optimize::OptimizerConfig;
use obstacle_core::{HoldAll, RadialShape};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every accepted key with its default value.
const KEYS: &[(&str, &str)] = &[
    ("r_omega", "1.0"),
    ("r_k", "0.8"),
    ("r_min", "0.1"),
    ("k_max", "16"),
    ("truth_r0", "0.5"),
    ("truth_cos", "0, 0.08"),
    ("truth_sin", ""),
    ("shape_r0", "0.5"),
    ("shape_cos", ""),
    ("shape_sin", ""),
    ("initial_r0", "auto"),
    ("initial_cos", ""),
    ("initial_sin", ""),
    ("data_file", ""),
    ("g_n_mode", "0"),
    ("g_n_amplitude", "1.0"),
    ("noise_level", "0.0"),
    ("seed", "1"),
    ("fine_factor", "2"),
    ("n_radial", "32"),
    ("n_angular", "128"),
    ("n_theta", "256"),
    ("grading", "1.0"),
    ("forward_levels", "3"),
    ("eta", "0.0"),
    ("epsilon_cone", "none"),
    ("max_iters", "300"),
    ("armijo_c", "1e-4"),
    ("backtrack", "0.5"),
    ("initial_step", "0.02"),
    ("max_displacement", "0.05"),
    ("grad_tol", "1e-7"),
    ("step_tol", "1e-10"),
    ("k_active", "8"),
    ("mode_schedule", "false"),
    ("min_mesh_angle", "5.0"),
    ("barzilai_borwein", "true"),
    ("fd_steps", "1e-3, 1e-4, 1e-5"),
    ("fd_modes", "all"),
    ("hessian_k_basis", "16"),
    ("hessian_etas", "0, 1e-4, 1e-3, 1e-2"),
    ("epsilons", "0.05"),
    ("shape_tol", "1e-3"),
    ("eta0", "1e-2"),
    ("eta_levels", "6"),
    ("noise_levels", "0.005, 0.01, 0.02"),
    ("seeds", "1, 2, 3, 4, 5, 6, 7, 8"),
    ("stability_eta", "1e-3"),
    ("k_high", "6"),
    ("out", "out"),
];

/// Where a configuration value came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Default,
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Default => write!(f, "default"),
            Self::File { path, line } => write!(f, "{}:{line}", path.display()),
            Self::Flag => write!(f, "command line"),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Untyped key-value settings, defaults filled in.
#[derive(Debug, Clone)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Splits `--key value` and `--key=value` arguments into normalized pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(config_error(&Origin::Flag, format!("expected `--key value`, got `{arg}`")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| config_error(&Origin::Flag, format!("missing value for `--{flag}`")))?;
                (flag.to_string(), v.clone())
            }
        };
        pairs.push((normalize_key(&key), value));
    }
    Ok(pairs)
}

fn config_error(origin: &Origin, message: impl fmt::Display) -> CliError {
    CliError::Config(format!("{origin}: {message}"))
}

impl Default for RawConfig {
    fn default() -> Self {
        let entries = KEYS
            .iter()
            .map(|&(k, v)| {
                (
                    k.to_string(),
                    Entry {
                        value: v.to_string(),
                        origin: Origin::Default,
                    },
                )
            })
            .collect();
        Self { entries }
    }
}

impl RawConfig {
    fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), CliError> {
        let key = normalize_key(key);
        match self.entries.get_mut(&key) {
            Some(entry) => {
                *entry = Entry {
                    value: value.trim().to_string(),
                    origin,
                };
                Ok(())
            }
            None => Err(config_error(&origin, format!("unknown key `{key}`"))),
        }
    }

    /// Applies the `key = value` lines of `text`; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), CliError> {
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_error(&origin, format!("expected `key = value`, got `{line}`")));
            };
            let key = normalize_key(key);
            if let Some(first) = seen.insert(key.clone(), i + 1) {
                return Err(config_error(&origin, format!("duplicate key `{key}` (first set on line {first})")));
            }
            self.set(&key, value, origin)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, path)
    }

    /// Applies `(key, value)` pairs from [`parse_overrides`].
    pub fn apply_overrides(&mut self, pairs: &[(String, String)]) -> Result<(), CliError> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v, Origin::Flag))
    }

    pub fn set_flag(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        self.set(key, value, Origin::Flag)
    }

    fn entry(&self, key: &str) -> &Entry {
        self.entries.get(key).expect("key is declared in KEYS")
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        let e = self.entry(key);
        e.value
            .parse()
            .map_err(|err| config_error(&e.origin, format!("invalid value `{}` for `{key}`: {err}", e.value)))
    }

    fn get_bool(&self, key: &str) -> Result<bool, CliError> {
        let e = self.entry(key);
        match e.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            _ => Err(config_error(&e.origin, format!("invalid boolean `{}` for `{key}`", e.value))),
        }
    }

    fn get_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        let e = self.entry(key);
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|err| config_error(&e.origin, format!("invalid list item `{s}` for `{key}`: {err}")))
            })
            .collect()
    }

    fn get_nonempty_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        let list = self.get_list(key)?;
        if list.is_empty() {
            return Err(config_error(&self.entry(key).origin, format!("`{key}` must not be empty")));
        }
        Ok(list)
    }

    /// `key = value` lines sorted by key, without `out`; the input of the
    /// config hash, so runs differing only in their output directory agree.
    pub fn canonical(&self) -> String {
        self.entries
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, e)| format!("{k} = {}\n", e.value))
            .collect()
    }

    fn error_at(&self, key: &str, message: impl fmt::Display) -> CliError {
        config_error(&self.entry(key).origin, message)
    }
}

/// Fourier modes checked by the gradient check.
#[derive(Debug, Clone, PartialEq)]
pub enum FdModes {
    /// Every coefficient of the active modes.
    All,
    Modes(Vec<usize>),
}

/// Typed view of a [`RawConfig`].
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub domain: HoldAll,
    pub truth: RadialShape,
    pub shape: RadialShape,
    pub initial: RadialShape,
    pub data_file: Option<PathBuf>,
    pub g_n_mode: usize,
    pub g_n_amplitude: f64,
    pub noise_level: f64,
    pub seed: u64,
    pub fine_factor: usize,
    pub resolution: Resolution,
    pub forward_levels: usize,
    pub optimizer: OptimizerConfig,
    pub fd_steps: Vec<f64>,
    pub fd_modes: FdModes,
    pub hessian_k_basis: usize,
    pub hessian_etas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub shape_tol: f64,
    pub eta0: f64,
    pub eta_levels: usize,
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub stability_eta: f64,
    pub k_high: usize,
    pub out: PathBuf,
    /// SHA-256 of the canonical configuration.
    pub hash: String,
    pub canonical: String,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let domain = HoldAll::new(raw.get("r_omega")?, raw.get("r_k")?, raw.get("r_min")?)
            .map_err(|e| CliError::Config(format!("domain (r_omega, r_k, r_min): {e}")))?;
        let k_max: usize = raw.get("k_max")?;
        let shape_from = |prefix: &str, r0: f64| -> Result<RadialShape, CliError> {
            let cos_key = format!("{prefix}_cos");
            let sin_key = format!("{prefix}_sin");
            let cos: Vec<f64> = raw.get_list(&cos_key)?;
            let sin: Vec<f64> = raw.get_list(&sin_key)?;
            let k = k_max.max(cos.len()).max(sin.len());
            let pad = |mut v: Vec<f64>| {
                v.resize(k, 0.0);
                v
            };
            RadialShape::new(r0, pad(cos), pad(sin))
                .map_err(|e| raw.error_at(&cos_key, format!("invalid {prefix} shape: {e}")))
        };
        let truth = shape_from("truth", raw.get("truth_r0")?)?;
        let shape = shape_from("shape", raw.get("shape_r0")?)?;
        let initial_r0 = match raw.entry("initial_r0").value.as_str() {
            "auto" => domain.default_initial_radius(),
            _ => raw.get("initial_r0")?,
        };
        let initial = shape_from("initial", initial_r0)?;

        let data_file = match raw.entry("data_file").value.as_str() {
            "" => None,
            path => {
                let path = PathBuf::from(path);
                if !path.is_file() {
                    return Err(raw.error_at("data_file", format!("file {} does not exist", path.display())));
                }
                Some(path)
            }
        };

        let resolution = Resolution {
            n_radial: raw.get("n_radial")?,
            n_angular: raw.get("n_angular")?,
            n_theta: raw.get("n_theta")?,
            grading: raw.get("grading")?,
        };
        if resolution.n_radial < 1 || resolution.n_angular < 8 || resolution.n_theta < 8 {
            return Err(raw.error_at("n_angular", "need n_radial >= 1, n_angular >= 8, n_theta >= 8"));
        }
        let epsilon_cone = match raw.entry("epsilon_cone").value.as_str() {
            "none" | "" => None,
            _ => Some(raw.get("epsilon_cone")?),
        };
        let optimizer = OptimizerConfig {
            eta: raw.get("eta")?,
            epsilon_cone,
            max_iters: raw.get("max_iters")?,
            armijo_c: raw.get("armijo_c")?,
            backtrack: raw.get("backtrack")?,
            initial_step: raw.get("initial_step")?,
            max_displacement: raw.get("max_displacement")?,
            grad_tol: raw.get("grad_tol")?,
            step_tol: raw.get("step_tol")?,
            k_active: raw.get("k_active")?,
            mode_schedule: raw.get_bool("mode_schedule")?,
            min_mesh_angle: raw.get("min_mesh_angle")?,
            barzilai_borwein: raw.get_bool("barzilai_borwein")?,
        };
        optimizer
            .validate()
            .map_err(|e| CliError::Config(format!("optimizer settings: {e}")))?;
        if optimizer.k_active > k_max {
            return Err(raw.error_at("k_active", format!("k_active exceeds k_max = {k_max}")));
        }

        let fd_modes = match raw.entry("fd_modes").value.as_str() {
            "all" => FdModes::All,
            _ => FdModes::Modes(raw.get_nonempty_list("fd_modes")?),
        };
        let canonical = raw.canonical();
        let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
        Ok(Self {
            domain,
            truth,
            shape,
            initial,
            data_file,
            g_n_mode: raw.get("g_n_mode")?,
            g_n_amplitude: raw.get("g_n_amplitude")?,
            noise_level: raw.get("noise_level")?,
            seed: raw.get("seed")?,
            fine_factor: raw.get("fine_factor")?,
            resolution,
            forward_levels: raw.get("forward_levels")?,
            optimizer,
            fd_steps: raw.get_nonempty_list("fd_steps")?,
            fd_modes,
            hessian_k_basis: raw.get("hessian_k_basis")?,
            hessian_etas: raw.get_nonempty_list("hessian_etas")?,
            epsilons: raw.get_nonempty_list("epsilons")?,
            shape_tol: raw.get("shape_tol")?,
            eta0: raw.get("eta0")?,
            eta_levels: raw.get("eta_levels")?,
            noise_levels: raw.get_nonempty_list("noise_levels")?,
            seeds: raw.get_nonempty_list("seeds")?,
            stability_eta: raw.get("stability_eta")?,
            k_high: raw.get("k_high")?,
            out: PathBuf::from(&raw.entry("out").value),
            hash,
            canonical,
        })
    }
}
