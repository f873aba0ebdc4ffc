use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
# coarse discretization for fast runs
n_radial = 16
n_angular = 64
n_theta = 64
k_max = 8
k_active = 4
max_iters = 40
";

fn obstacle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obstacle"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.cfg");
    fs::write(&path, SMALL).unwrap();
    path
}

fn report_value(out: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in report:\n{text}"));
    line.split(" = ").nth(1).unwrap().parse().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exited normally")
}

#[test]
fn forward_concentric_matches_bessel_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fwd");
    let o = obstacle(&["forward", "--out", out.to_str().unwrap(), "--forward_levels", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report_value(&out, "bessel_l2_error") < 2e-3);
    assert!(report_value(&out, "convergence_order") >= 1.9);
    for f in ["mesh.csv", "field.csv", "trace.csv", "flux.csv", "bessel.csv", "config.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("subcommand = forward"));
    assert!(manifest.contains("status = ok"));
    let hash = manifest.lines().find_map(|l| l.strip_prefix("config_sha256 = ")).unwrap();
    assert_eq!(hash.len(), 64);
}

#[test]
fn forward_with_zero_neumann_data_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("zero");
    let o = obstacle(&[
        "forward",
        "--out",
        out.to_str().unwrap(),
        "--g_n_amplitude",
        "0",
        "--shape_cos",
        "0.05, 0.02",
    ]);
    assert_eq!(code(&o), 0);
    for key in ["max_abs_u", "max_abs_trace", "max_abs_flux"] {
        assert_eq!(report_value(&out, key), 0.0);
    }
    let rows = csv_rows(&out.join("trace.csv"));
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn config_errors_report_location_and_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "eta = 1e-3\nmax_iters = many\n").unwrap();
    let o = obstacle(&["reconstruct", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("bad.cfg:2"), "{stderr}");

    let o = obstacle(&["forward", "--no_such_key", "1"]);
    assert_eq!(code(&o), 2);
    let o = obstacle(&["forward", "--jobs", "0", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = obstacle(&["eta-sweep", "--config", "/nonexistent.cfg"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn solver_failures_have_their_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = obstacle(&[
        "reconstruct",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("r").to_str().unwrap(),
        "--initial_r0",
        "0.79",
        "--initial_cos",
        "0.05",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gradient_check_passes_and_fails_on_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("gc");
    let o = obstacle(&[
        "gradient-check",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--shape_cos",
        "0, 0.1",
        "--eta",
        "1e-3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report_value(&out, "best_relative_error") < 1e-2);
    assert_eq!(report_value(&out, "components"), 9.0);

    // a huge step on a tiny mesh cannot meet the tolerance
    let out = tmp.path().join("gc_bad");
    let o = obstacle(&[
        "gradient-check",
        "--out",
        out.to_str().unwrap(),
        "--n_radial",
        "4",
        "--n_angular",
        "16",
        "--n_theta",
        "16",
        "--shape_cos",
        "0, 0.1",
        "--fd_modes",
        "2",
        "--fd_steps",
        "0.1",
    ]);
    assert_eq!(code(&o), 4);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("status = assertion-failed"));
}

#[test]
fn hessian_spectrum_reports_decay_and_coercivity() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("hs");
    let o = obstacle(&[
        "hessian-spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--truth_cos",
        "",
        "--k_active",
        "8",
        "--hessian_k_basis",
        "8",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("spectrum_summary.csv"));
    let find = |eta: &str, s: &str| rows.iter().find(|r| r[0] == eta && r[1] == s).unwrap().clone();
    let plain = find("0e0", "0");
    assert!(plain[3].parse::<f64>().unwrap() < 1e-2);
    for r in &rows {
        assert!(r[5].parse::<f64>().unwrap() < 1e-8);
    }
    let b0: f64 = find("0e0", "1")[4].parse().unwrap();
    let b2: f64 = find("1e-2", "1")[4].parse().unwrap();
    assert!(b2 > 0.0 && b2 >= 10.0 * b0);
    assert!(out.join("spectra/eigenvalues_eta0_s0.csv").is_file());
    assert!(out.join("spectra/hessian_eta3.csv").is_file());
}

#[test]
fn reconstruct_with_small_epsilon_matches_unconstrained_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("rc");
    let o = obstacle(&[
        "reconstruct",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--epsilons",
        "0.02, 0.05",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(report_value(&out, "hausdorff_to_truth") < 2e-2);
    let rows = csv_rows(&out.join("epsilon.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() < 2e-3));
    assert!(out.join("runs/epsilon_1/trace.csv").is_file());
    assert!(out.join("shape.txt").is_file());
}

#[test]
fn eta_sweep_single_level_passes_trivially() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("es");
    let o = obstacle(&[
        "eta-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--eta_levels",
        "0",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&out.join("eta_sweep.csv")).len(), 1);
    assert!(out.join("runs/reference/trace.csv").is_file());
    assert!(out.join("runs/n_0/shape.txt").is_file());
}

#[test]
fn eta_sweep_distances_decrease() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("es");
    let o = obstacle(&[
        "eta-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--eta_levels",
        "3",
        "--grad_tol",
        "1e-8",
        "--max_iters",
        "100",
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d: Vec<f64> = csv_rows(&out.join("eta_sweep.csv")).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(d.len(), 4);
    assert!(d.windows(2).skip(1).all(|w| w[1] <= w[0]), "{d:?}");
}

#[test]
fn stability_study_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let run = |name: &str, jobs: &str| {
        let out = tmp.path().join(name);
        let o = obstacle(&[
            "stability-study",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--noise_levels",
            "0.01",
            "--seeds",
            "1, 2",
            "--k_active",
            "8",
            "--jobs",
            jobs,
        ]);
        (code(&o), out)
    };
    let (c1, a) = run("a", "1");
    let (c2, b) = run("b", "2");
    assert_eq!(c1, c2);
    assert!(c1 == 0 || c1 == 4);
    for f in ["stability.csv", "stability_summary.csv", "config.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(csv_rows(&a.join("stability.csv")).len(), 4);
    assert!(a.join("runs/noise_0_seed_2_penalized/result.csv").is_file());
}
