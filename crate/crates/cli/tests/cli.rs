use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clap::Parser;
use nonconvex_mest::{Penalty, PenaltyKind};
use nonconvex_mest_cli::{exit_code, run_with_prox, Cli, EXIT_VERIFICATION};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nonconvex-mest"));
    c.env_remove("NONCONVEX_MEST_THREADS");
    c
}

fn run_bin(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn small_linear(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("small.toml");
    write(&cfg, "[simulate]\np = 32\nrescale = 20.0\n\n[penalty]\nkind = \"l1\"\n");
    cfg
}

#[test]
fn solve_default_lasso_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_bin(&["solve", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["solution.csv", "trace.csv", "summary.json", "beta_star.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["beta"].as_array().unwrap().len(), 128);
    assert!(fs::read_to_string(out.join("trace.csv")).unwrap().starts_with("iter,objective,opt_error,stat_error,eta,projected_flag\n"));
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_linear(dir.path());
    let trace = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = run_bin(&["solve", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        fs::read(out.join("trace.csv")).unwrap()
    };
    let (a, b, c) = (trace("7", "a"), trace("7", "b"), trace("8", "c"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn iteration_limit_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    write(&cfg, "[simulate]\np = 32\n\n[solver]\nmax_iters = 2\n");
    let o = run_bin(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_errors_exit_1_with_key_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "[solver]\nmax_iter = 10\n");
    let o = run_bin(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("max_iter") && err.contains("line 2"), "{err}");

    write(&cfg, "[data]\ndesign = \"nope.csv\"\nresponse = \"nope_y.csv\"\n\n[solver]\nradius = 1.0\n");
    let o = run_bin(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);

    let o = run_bin(&["experiment", "nonsense"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn simulate_then_solve_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let sim = dir.path().join("sim.toml");
    write(&sim, "[simulate]\np = 32\nseed = 3\ncorruption = { mode = \"missing\", vartheta = 0.1 }\n");
    let o = run_bin(&["simulate", "--config", sim.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(data.join("design.csv")).unwrap().contains("NA"));

    let solve = data.join("solve.toml");
    write(
        &solve,
        "[data]\ndesign = \"design.csv\"\nresponse = \"response.csv\"\ncorrection = { type = \"missing\", vartheta = 0.1 }\n\n[penalty]\nkind = \"mcp\"\n\n[solver]\nradius = 3.0\n",
    );
    let out = dir.path().join("fit");
    let o = run_bin(&["solve", "--config", solve.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let beta = nonconvex_mest::io::read_vector_file(&out.join("solution.csv")).unwrap();
    let star = nonconvex_mest::io::read_vector_file(&data.join("beta_star.csv")).unwrap();
    assert!((beta - star).norm() < 0.8);
}

#[test]
fn glasso_solve_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.toml");
    write(&cfg, "[problem]\nloss = \"glasso\"\n\n[simulate]\np = 8\nn = 400\ns = 6\n\n[penalty]\nkind = \"scad\"\n");
    let o = run_bin(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run_bin(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("d").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("d/samples.csv").exists() && dir.path().join("d/theta_star.csv").exists());
}

#[test]
fn prox_check_passes_and_filters() {
    let o = run_bin(&["prox-check", "--instances", "300"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().count(), 4);
    let o = run_bin(&["prox-check", "--penalty", "scad", "--instances", "300"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.starts_with("Scad") && s.lines().count() == 1, "{s}");
}

#[test]
fn prox_check_catches_a_wrong_branch_constant() {
    let cli = Cli::try_parse_from(["nonconvex-mest", "prox-check", "--penalty", "scad", "--instances", "300"]).unwrap();
    let mutated = |p: &Penalty, z: f64, nu: f64| match p.kind() {
        PenaltyKind::Scad { a } => Penalty::new(p.lambda(), PenaltyKind::Scad { a: a + 0.3 }).unwrap().prox(z, nu).unwrap(),
        _ => p.prox(z, nu).unwrap(),
    };
    let err = run_with_prox(&cli, &mutated).unwrap_err();
    assert_eq!(exit_code(&err), EXIT_VERIFICATION);

    let ok = |p: &Penalty, z: f64, nu: f64| p.prox(z, nu).unwrap();
    run_with_prox(&cli, &ok).unwrap();
}

#[test]
fn experiment_scaling_writes_report_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scaling.toml");
    write(&cfg, "p_list = [16, 32, 64]\nrescaled_samples = [2.0, 6.0]\ntrials = 2\n");
    let a = dir.path().join("a");
    let o = run_bin(&["experiment", "scaling", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(a.join("scaling_summary.csv")).unwrap();
    let curves: std::collections::BTreeSet<(String, String)> = summary
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    assert_eq!(curves.len(), 9);
    for f in ["scaling_trials.csv", "scaling_checks.csv", "scaling_metadata.json", "scaling_l2_error.svg", "scaling_l2_error.gp"] {
        assert!(a.join(f).exists(), "{f}");
    }

    let b = dir.path().join("b");
    let meta = a.join("scaling_metadata.json");
    let o = bin()
        .args(["experiment", "scaling", "--metadata", meta.to_str().unwrap(), "--out", b.to_str().unwrap()])
        .env("NONCONVEX_MEST_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    for f in ["scaling_trials.csv", "scaling_summary.csv", "scaling_checks.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let o = run_bin(&["experiment", "glasso", "--metadata", meta.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn experiment_rejects_empty_p_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("e.toml");
    write(&cfg, "p_list = []\n");
    let o = run_bin(&["experiment", "scaling", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn penalty_flag_filters_experiment_penalties() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.toml");
    write(&cfg, "p = 16\nk = 2\ntrials = 2\nrsc_pairs = 20\n");
    let out = dir.path().join("o");
    let o = run_bin(&["experiment", "bounds", "--config", cfg.to_str().unwrap(), "--penalty", "mcp", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("bounds_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("mcp_b3.5"));
}

#[test]
fn help_documents_config_keys() {
    let o = run_bin(&["solve", "--help"]);
    assert_eq!(code(&o), 0);
    let h = stdout(&o);
    for key in ["[simulate]", "[penalty]", "[solver]", "max_iters = 5000", "tol_stat = 1e-7", "sigma_w = 0.2", "snr = 5.0", "a = 3.7", "b = 3.5"] {
        assert!(h.contains(key), "solve --help lacks {key}");
    }
    let h = stdout(&run_bin(&["experiment", "--help"]));
    for key in ["p_list = [64, 128, 256]", "rescaled_samples", "zeta_list = [0.5, 0.9]", "n_list = [200, 800, 3200]", "n_inits = 10"] {
        assert!(h.contains(key), "experiment --help lacks {key}");
    }
    assert!(stdout(&run_bin(&["prox-check", "--help"])).contains("instances = 1000"));
    assert!(stdout(&run_bin(&["--help"])).contains("NONCONVEX_MEST_THREADS"));
}
