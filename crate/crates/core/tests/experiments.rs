use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use nonconvex_mest::experiments::{self, *};
use nonconvex_mest::loss::{self, Loss};
use nonconvex_mest::{Penalty, PenaltyKind};

fn tiny_scaling() -> ScalingRun {
    ScalingRun {
        p_list: vec![16, 32],
        rescaled_samples: vec![2.0, 8.0],
        trials: 3,
        seed: 5,
        ..ScalingRun::default()
    }
}

fn csvs(r: &ExperimentReport) -> Vec<String> {
    r.tables.iter().map(|t| t.to_csv().unwrap()).collect()
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfgs = [
        ExperimentConfig::Scaling(tiny_scaling()),
        ExperimentConfig::Convergence(ConvergenceRun {
            p: 32,
            n_inits: 3,
            data_seeds: vec![1, 2],
            ..ConvergenceRun::default()
        }),
        ExperimentConfig::Glasso(GlassoRun {
            p: 6,
            s: 4,
            n_list: vec![100, 400],
            trials: 2,
            ..GlassoRun::default()
        }),
    ];
    for cfg in &cfgs {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_experiment(cfg).unwrap());
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| run_experiment(cfg).unwrap());
        assert_eq!(csvs(&one), csvs(&many), "{}", cfg.name());
    }
}

#[test]
fn seed_changes_results() {
    let a = run_scaling(&tiny_scaling()).unwrap();
    let b = run_scaling(&ScalingRun { seed: 6, ..tiny_scaling() }).unwrap();
    assert_ne!(csvs(&a), csvs(&b));
}

#[test]
fn report_files_stay_in_the_output_directory_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_scaling(&tiny_scaling()).unwrap();
    let written = report.write(dir.path()).unwrap();
    assert!(written.iter().all(|p| p.starts_with(dir.path())));
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for n in ["scaling_trials.csv", "scaling_summary.csv", "scaling_checks.csv", "scaling_metadata.json", "scaling_l2_error.svg", "scaling_l2_error.gp"] {
        assert!(names.contains(&n.to_string()), "{n}");
    }
    let meta = read_metadata(&dir.path().join("scaling_metadata.json")).unwrap();
    assert_eq!(meta.experiment, ExperimentConfig::Scaling(tiny_scaling()));
    assert_eq!(meta.version, env!("CARGO_PKG_VERSION"));
    let again = rerun_from_metadata(&dir.path().join("scaling_metadata.json")).unwrap();
    assert_eq!(csvs(&report), csvs(&again));
}

#[test]
fn scaling_report_shape() {
    let r = run_scaling(&tiny_scaling()).unwrap();
    let trials = r.table("trials").unwrap();
    assert_eq!(trials.rows.len(), 2 * 2 * 3 * 3);
    let summary = r.table("summary").unwrap();
    assert_eq!(summary.rows.len(), 3 * 2 * 2);
    // identical data across penalties within a trial
    let seeds = trials.column("seed").unwrap();
    assert_eq!(trials.rows[0][seeds], trials.rows[1][seeds]);
    assert!(r.checks.iter().any(|c| c.name.starts_with("stacking/")));
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(run_scaling(&ScalingRun { p_list: vec![], ..tiny_scaling() }).is_err());
    assert!(run_scaling(&ScalingRun { rescaled_samples: vec![0.0], ..tiny_scaling() }).is_err());
    assert!(run_glasso_rate(&GlassoRun { n_list: vec![400, 100], ..GlassoRun::default() }).is_err());
    assert!(run_breakdown(&BreakdownRun { zeta_list: vec![1.0], ..BreakdownRun::default() }).is_err());
    assert!(run_convergence(&ConvergenceRun { data_seeds: vec![], ..ConvergenceRun::default() }).is_err());
    assert!(ExperimentConfig::default_for("nope").is_err());
}

#[test]
fn config_round_trips_through_json() {
    for kind in ["scaling", "convergence", "breakdown", "glasso", "bounds"] {
        let cfg = ExperimentConfig::default_for(kind).unwrap().with_seed(42);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.name(), kind);
    }
}

#[test]
fn convergence_reports_linear_rates_on_a_small_problem() {
    let cfg = ConvergenceRun {
        p: 32,
        n_inits: 4,
        penalties: vec![PenaltyKind::L1, PenaltyKind::Mcp { b: 3.5 }],
        ..ConvergenceRun::default()
    };
    let r = run_convergence(&cfg).unwrap();
    let runs = r.table("runs").unwrap();
    assert_eq!(runs.rows.len(), 8);
    for (s, r2) in runs.numbers("slope").iter().zip(runs.numbers("r2")) {
        assert!(*s < 0.0 && r2 > 0.9, "slope {s}, R^2 {r2}");
    }
    assert!(runs.numbers("plateau_ratio").iter().all(|v| *v <= 2.0));
    let traces = r.table("traces").unwrap();
    assert!(traces.rows.len() > runs.rows.len());
}

#[test]
fn glasso_error_shrinks_with_n() {
    let r = run_glasso_rate(&GlassoRun {
        p: 8,
        s: 6,
        n_list: vec![100, 1600],
        trials: 3,
        ..GlassoRun::default()
    })
    .unwrap();
    let slope = r.table("fit").unwrap().numbers("slope")[0];
    assert!(slope < -0.2, "{slope}");
}

fn clean_ls(p: usize, n: usize) -> (Loss, DVector<f64>) {
    let x = DMatrix::from_fn(n, p, |i, j| ((i * 7 + j * 13) % 11) as f64 / 5.0 - 1.0);
    let beta = DVector::from_fn(p, |j, _| if j < 2 { 1.0 } else { 0.0 });
    let y = &x * &beta;
    (Loss::CorrectedLinear(loss::clean_least_squares(&x, &y).unwrap()), beta)
}

#[test]
fn bound_check_matches_hand_evaluation() {
    let (loss, beta_star) = clean_ls(5, 40);
    let pen = Penalty::new(0.2, PenaltyKind::Mcp { b: 2.0 }).unwrap();
    let tilde = &beta_star + DVector::from_vec(vec![0.1, -0.05, 0.0, 0.02, 0.0]);
    let out = error_bound_check(&loss, &tilde, &beta_star, &pen, 1.0).unwrap();
    let BoundOutcome::Checked(v) = out else { panic!("should apply") };
    let (lam, mu, k) = (0.2, 0.5, 2.0f64);
    let d = 4.0 - 3.0 * mu;
    assert!((v[0].rhs - 6.0 * lam * k.sqrt() / d).abs() < 1e-12);
    assert!((v[1].rhs - 24.0 * lam * k / d).abs() < 1e-12);
    assert!((v[2].rhs - lam * lam * k * (9.0 / d + 27.0 * mu / (d * d))).abs() < 1e-12);
    let delta = &tilde - &beta_star;
    assert!((v[0].lhs - delta.norm()).abs() < 1e-12);
    assert!((v[1].lhs - delta.lp_norm(1)).abs() < 1e-12);
    assert!(v.iter().all(|c| c.satisfied == (c.lhs <= c.rhs)));
}

#[test]
fn bound_check_capped_and_not_applicable() {
    let (loss, beta_star) = clean_ls(4, 30);
    let capped = Penalty::new(0.5, PenaltyKind::CappedL1 { c: 2.0 }).unwrap();
    let out = error_bound_check(&loss, &beta_star, &beta_star, &capped, 1.0).unwrap();
    let BoundOutcome::Checked(v) = out else { panic!("should apply") };
    let (lam, m) = (0.5, 0.5);
    let d = 2.0 - m;
    assert!((v[0].rhs - 7.0 * lam * 2f64.sqrt() / (2.0 * d)).abs() < 1e-12);
    assert!((v[1].rhs - 28.0 * lam * 2.0 / d).abs() < 1e-12);
    assert_eq!(v[0].lhs, 0.0);

    let scad = Penalty::new(0.5, PenaltyKind::Scad { a: 2.5 }).unwrap();
    let out = error_bound_check(&loss, &beta_star, &beta_star, &scad, 0.4).unwrap();
    assert!(matches!(out, BoundOutcome::NotApplicable(_)));
    assert_eq!(out.all_satisfied(), None);
}

#[test]
fn pre_plateau_fit_on_geometric_decay() {
    let errs: Vec<f64> = (0..30).map(|t| if t < 20 { 0.7f64.powi(t) } else { 0.7f64.powi(20) }).collect();
    let (slope, _, r2, used) = pre_plateau_fit(&errs);
    assert!((slope - 0.7f64.ln()).abs() < 1e-10);
    assert!((r2 - 1.0).abs() < 1e-12);
    assert_eq!(used, 21);
    let (s, ..) = pre_plateau_fit(&[1.0]);
    assert!(s.is_nan());
}

#[test]
fn distinct_points_cluster() {
    let pts = vec![
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![1e-6, 0.0]),
        DVector::from_vec(vec![1.0, 0.0]),
    ];
    assert_eq!(count_distinct(&pts, 1e-4), 2);
    assert_eq!(count_distinct(&pts, 2.0), 1);
    assert_eq!(count_distinct(&[], 1.0), 0);
}

proptest! {
    #[test]
    fn linear_fit_recovers_lines(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 3usize..20) {
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let (s, i, r2) = experiments::linear_fit(&x, &y);
        prop_assert!((s - a).abs() < 1e-9 && (i - b).abs() < 1e-9);
        prop_assert!(r2 > 1.0 - 1e-9 || a.abs() < 1e-12);
    }

    #[test]
    fn stacking_spread_is_scale_free(v in proptest::collection::vec(0.01f64..10.0, 1..6), c in 0.1f64..100.0) {
        let s = stacking_spread(&v);
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        prop_assert!(s >= 0.0);
        prop_assert!((stacking_spread(&scaled) - s).abs() < 1e-9 * (1.0 + s));
    }

    #[test]
    fn distinct_count_is_bounded(raw in proptest::collection::vec(-1.0f64..1.0, 0..12), tol in 0.0f64..1.0) {
        let pts: Vec<DVector<f64>> = raw.chunks(2).map(DVector::from_row_slice).filter(|v| v.len() == 2).collect();
        let d = count_distinct(&pts, tol);
        prop_assert!(d <= pts.len());
        prop_assert!(pts.is_empty() || d >= 1);
    }
}
