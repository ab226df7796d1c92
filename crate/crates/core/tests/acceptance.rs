//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line and then asserts the outcome.
//! Criteria are evaluated from the report tables with the constants below,
//! independently of the checks the experiments compute for themselves.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nonconvex_mest::experiments::{
    self, BoundRun, BreakdownRun, ConvergenceRun, ExperimentConfig, ExperimentReport, GlassoRun, ScalingRun, Table,
};
use nonconvex_mest::verify::{self, PenaltyFamily};
use nonconvex_mest::{Penalty, PenaltyKind};

const PROX_INSTANCES: usize = 1000;
const PROX_TOL: f64 = 1e-8;
const PROX_BUDGET: Duration = Duration::from_secs(10);

const PROPERTY_GRID: usize = 10_000;
const PROPERTY_VECTORS: usize = 1000;
const PROPERTY_BUDGET: Duration = Duration::from_secs(5);

const HALVING_RATIO: f64 = 0.5;
const STACKING_REL: f64 = 0.25;
const SCALING_BUDGET: Duration = Duration::from_secs(600);

const MIN_R2: f64 = 0.95;
const PLATEAU_FACTOR: f64 = 2.0;
const MIN_DISTINCT: usize = 2;
const OPTIMA_SPREAD: f64 = 2.0;
const CONVERGENCE_BUDGET: Duration = Duration::from_secs(300);

const SPREAD_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const SPREAD_BUDGET: Duration = Duration::from_secs(300);

const BREAKDOWN_BUDGET: Duration = Duration::from_secs(600);

const BOUND_TRIALS: usize = 20;
const BOUND_MIN_HOLD: usize = 19;
const BOUND_BUDGET: Duration = Duration::from_secs(120);

const GLASSO_SLOPE: (f64, f64) = (-0.65, -0.35);
const GLASSO_BUDGET: Duration = Duration::from_secs(300);

fn report(id: u32, name: &str, passed: bool, detail: &str) {
    println!("criterion {id}: {} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {id} ({name}) failed: {detail}");
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn col(t: &Table, name: &str) -> usize {
    t.column(name).unwrap_or_else(|| panic!("table {} has no column {name}", t.name))
}

fn num(row: &[String], j: usize) -> f64 {
    row[j].parse().unwrap_or(f64::NAN)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[test]
fn criterion_1_prox_oracle() {
    let (results, elapsed) = timed(|| verify::run_prox_check(&PenaltyFamily::ALL, PROX_INSTANCES, 2024, verify::closed_form_prox));
    let worst = results.iter().map(|r| r.max_objective_gap).fold(0.0, f64::max);
    let all = results.iter().all(|r| r.instances == PROX_INSTANCES && r.max_objective_gap <= PROX_TOL);
    let per: Vec<String> = results.iter().map(|r| format!("{:?} {:.2e}", r.family, r.max_objective_gap)).collect();
    report(
        1,
        "prox oracle",
        all && elapsed < PROX_BUDGET,
        &format!("max objective gap {worst:.2e} (tol {PROX_TOL:e}) [{}], {:.2?} (budget {PROX_BUDGET:?})", per.join(", "), elapsed),
    );
}

#[test]
fn criterion_2_penalty_properties() {
    let lambdas = [0.1, 0.5, 1.0, 2.0];
    let kinds = [PenaltyKind::L1, PenaltyKind::Scad { a: 3.7 }, PenaltyKind::Scad { a: 2.5 }, PenaltyKind::Mcp { b: 3.5 }, PenaltyKind::Mcp { b: 1.5 }];
    let (failures, elapsed) = timed(|| {
        let mut failures = Vec::new();
        for (i, kind) in kinds.iter().enumerate() {
            for (j, &lam) in lambdas.iter().enumerate() {
                let p = Penalty::new(lam, *kind).unwrap();
                let r = verify::penalty_property_suite(&p, PROPERTY_GRID, PROPERTY_VECTORS, (i * 10 + j) as u64);
                if !r.all_passed() {
                    failures.push(format!("{r:?}"));
                }
            }
        }
        failures
    });
    report(
        2,
        "penalty property suite",
        failures.is_empty() && elapsed < PROPERTY_BUDGET,
        &format!("{} of {} penalty settings failed, {:.2?} (budget {PROPERTY_BUDGET:?}) {}", failures.len(), kinds.len() * lambdas.len(), elapsed, failures.join("; ")),
    );
}

#[test]
fn criterion_3_scaling() {
    let cfg = ScalingRun::default();
    let (rep, elapsed) = timed(|| experiments::run_scaling(&cfg).unwrap());
    let s = rep.table("summary").unwrap();
    let (cp, cpp, cg, cm) = (col(s, "penalty"), col(s, "p"), col(s, "rescaled"), col(s, "mean_l2"));
    let mut curves: BTreeMap<(String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in &s.rows {
        curves.entry((r[cp].clone(), r[cpp].parse().unwrap())).or_default().push((num(r, cg), num(r, cm)));
    }
    let mut problems = Vec::new();
    for ((pen, p), pts) in &mut curves {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if !pts.windows(2).all(|w| w[1].1 < w[0].1) {
            problems.push(format!("{pen} p={p} not monotone {:?}", pts.iter().map(|x| x.1).collect::<Vec<_>>()));
        }
        let ratio = pts.last().unwrap().1 / pts[0].1;
        if !(ratio <= HALVING_RATIO) {
            problems.push(format!("{pen} p={p} last/first = {ratio:.3}"));
        }
    }
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in &s.rows {
        cells.entry((r[cp].clone(), r[cg].clone())).or_default().push(num(r, cm));
    }
    let mut worst_stack: f64 = 0.0;
    for ((pen, g), v) in &cells {
        let rel = experiments::stacking_spread(v);
        worst_stack = worst_stack.max(rel);
        if !(rel <= STACKING_REL) {
            problems.push(format!("{pen} grid {g} stacking {rel:.3}"));
        }
    }
    report(
        3,
        "scaling reproduction",
        problems.is_empty() && elapsed < SCALING_BUDGET,
        &format!(
            "{} curves, worst stacking {worst_stack:.3} (tol {STACKING_REL}), halving ratio <= {HALVING_RATIO}, {:.2?} (budget {SCALING_BUDGET:?}); problems: {}",
            curves.len(),
            elapsed,
            if problems.is_empty() { "none".to_string() } else { problems.join("; ") }
        ),
    );
}

fn rate_problems(rep: &ExperimentReport, tag: &str) -> (Vec<String>, f64, f64) {
    let runs = rep.table("runs").unwrap();
    let (cp, ci, cs, cr, cpl) = (col(runs, "penalty"), col(runs, "init"), col(runs, "slope"), col(runs, "r2"), col(runs, "plateau_ratio"));
    let mut problems = Vec::new();
    let (mut min_r2, mut max_plateau) = (f64::INFINITY, 0.0f64);
    for r in &runs.rows {
        let (slope, r2, plateau) = (num(r, cs), num(r, cr), num(r, cpl));
        min_r2 = min_r2.min(if r2.is_nan() { f64::NEG_INFINITY } else { r2 });
        max_plateau = max_plateau.max(if plateau.is_nan() { f64::INFINITY } else { plateau });
        if !(slope < 0.0 && r2 >= MIN_R2) {
            problems.push(format!("{tag} {} init {} slope {slope:.3} R^2 {r2:.3}", r[cp], r[ci]));
        }
        if !(plateau <= PLATEAU_FACTOR) {
            problems.push(format!("{tag} {} init {} plateau ratio {plateau:.3}", r[cp], r[ci]));
        }
    }
    (problems, min_r2, max_plateau)
}

#[test]
fn criterion_4_linear_convergence() {
    let linear = ConvergenceRun::default();
    let logistic = ConvergenceRun::logistic();
    let ((lin, logi), elapsed) = timed(|| (experiments::run_convergence(&linear).unwrap(), experiments::run_convergence(&logistic).unwrap()));
    let (mut problems, r2a, pla) = rate_problems(&lin, "linear");
    let (p2, r2b, plb) = rate_problems(&logi, "logistic");
    problems.extend(p2);
    let s = logi.table("summary").unwrap();
    let (cp, cd, cs) = (col(s, "penalty"), col(s, "distinct_points"), col(s, "spread"));
    let mut optima = Vec::new();
    for r in &s.rows {
        if r[cp] == "lasso" {
            continue;
        }
        let (d, spread) = (num(r, cd) as usize, num(r, cs));
        optima.push(format!("{}: {d} points, spread {spread:.3}", r[cp]));
        if d < MIN_DISTINCT || !(spread <= OPTIMA_SPREAD) {
            problems.push(format!("logistic {} has {d} distinct points, spread {spread:.3}", r[cp]));
        }
    }
    report(
        4,
        "linear convergence",
        problems.is_empty() && elapsed < CONVERGENCE_BUDGET,
        &format!(
            "min R^2 {:.4} (need >= {MIN_R2}), max plateau ratio {:.2e} (need <= {PLATEAU_FACTOR}), logistic optima [{}], {:.2?} (budget {CONVERGENCE_BUDGET:?}); problems: {}",
            r2a.min(r2b),
            pla.max(plb),
            optima.join(", "),
            elapsed,
            if problems.is_empty() { "none".to_string() } else { problems.join("; ") }
        ),
    );
}

#[test]
fn criterion_5_scad_spread() {
    let cfg = ConvergenceRun {
        penalties: vec![PenaltyKind::Scad { a: 3.7 }, PenaltyKind::Scad { a: 2.5 }],
        data_seeds: SPREAD_SEEDS.to_vec(),
        ..ConvergenceRun::default()
    };
    let (rep, elapsed) = timed(|| experiments::run_convergence(&cfg).unwrap());
    let s = rep.table("summary").unwrap();
    let (cp, cs) = (col(s, "penalty"), col(s, "spread"));
    let spreads = |label: &str| s.rows.iter().filter(|r| r[cp] == label).map(|r| num(r, cs)).collect::<Vec<_>>();
    let (a37, a25) = (spreads("scad_a3.7"), spreads("scad_a2.5"));
    let (m37, m25) = (median(a37.clone()), median(a25.clone()));
    report(
        5,
        "SCAD spread comparison",
        a37.len() == SPREAD_SEEDS.len() && m37 < m25 && elapsed < SPREAD_BUDGET,
        &format!("median max/min spread a=3.7: {m37:.9}, a=2.5: {m25:.9} over {} seeds (need a=3.7 strictly smaller), {:.2?} (budget {SPREAD_BUDGET:?})", SPREAD_SEEDS.len(), elapsed),
    );
}

#[test]
fn criterion_6_breakdown() {
    let cfg = BreakdownRun::default();
    let (rep, elapsed) = timed(|| experiments::run_breakdown(&cfg).unwrap());
    let s = rep.table("summary").unwrap();
    let (cz, cp, cf, cr) = (col(s, "zeta"), col(s, "penalty"), col(s, "converged_fraction"), col(s, "reached_reference_fraction"));
    let frac = |z: &str, p: &str, j: usize| s.rows.iter().find(|r| r[cz] == z && r[cp] == p).map_or(f64::NAN, |r| num(r, j));
    let lasso_ok = frac("0.5", "lasso", cf) == 1.0 && frac("0.9", "lasso", cf) == 1.0;
    let (lo, hi) = (frac("0.5", "scad_a2.5", cf), frac("0.9", "scad_a2.5", cf));
    report(
        6,
        "breakdown study",
        lasso_ok && hi < lo && elapsed < BREAKDOWN_BUDGET,
        &format!(
            "lasso converged fractions {} / {}; SCAD a=2.5 converged fraction zeta=0.9: {hi}, zeta=0.5: {lo} (need strictly lower at 0.9); fraction reaching the reference point {} / {}; {:.2?} (budget {BREAKDOWN_BUDGET:?})",
            frac("0.5", "lasso", cf),
            frac("0.9", "lasso", cf),
            frac("0.9", "scad_a2.5", cr),
            frac("0.5", "scad_a2.5", cr),
            elapsed
        ),
    );
}

#[test]
fn criterion_7_error_bounds() {
    let cfg = BoundRun {
        trials: BOUND_TRIALS,
        ..BoundRun::default()
    };
    let (rep, elapsed) = timed(|| experiments::run_bounds(&cfg).unwrap());
    let t = rep.table("trials").unwrap();
    let cp = col(t, "penalty");
    let oks = [col(t, "l2_ok"), col(t, "l1_ok"), col(t, "prediction_ok")];
    let mut per = BTreeMap::new();
    for r in &t.rows {
        let hold = oks.iter().all(|&j| r[j] == "true");
        *per.entry(r[cp].clone()).or_insert(0usize) += hold as usize;
    }
    let ok = per.len() == cfg.penalties.len() && per.values().all(|&h| h >= BOUND_MIN_HOLD);
    report(
        7,
        "error bound check",
        ok && elapsed < BOUND_BUDGET,
        &format!("trials with all three bounds holding {per:?} of {BOUND_TRIALS} (need >= {BOUND_MIN_HOLD}), {:.2?} (budget {BOUND_BUDGET:?})", elapsed),
    );
}

#[test]
fn criterion_8_glasso_rate() {
    let cfg = GlassoRun::default();
    let (rep, elapsed) = timed(|| experiments::run_glasso_rate(&cfg).unwrap());
    let t = rep.table("trials").unwrap();
    let (ns, errs) = (t.numbers("n"), t.numbers("frobenius_error"));
    let (x, y): (Vec<f64>, Vec<f64>) = ns.iter().zip(&errs).map(|(n, e)| (n.ln(), e.ln())).unzip();
    let (slope, _, r2) = experiments::linear_fit(&x, &y);
    report(
        8,
        "graphical Lasso rate",
        slope >= GLASSO_SLOPE.0 && slope <= GLASSO_SLOPE.1 && elapsed < GLASSO_BUDGET,
        &format!("log-log slope {slope:.4} (need in [{}, {}]), R^2 {r2:.3}, {} fits, {:.2?} (budget {GLASSO_BUDGET:?})", GLASSO_SLOPE.0, GLASSO_SLOPE.1, ns.len(), elapsed),
    );
}

#[test]
fn criterion_9_determinism() {
    let configs = [
        ExperimentConfig::Scaling(ScalingRun::default()),
        ExperimentConfig::Convergence(ConvergenceRun::default()),
        ExperimentConfig::Convergence(ConvergenceRun::logistic()),
        ExperimentConfig::Breakdown(BreakdownRun::default()),
        ExperimentConfig::Glasso(GlassoRun::default()),
        ExperimentConfig::Bounds(BoundRun::default()),
    ];
    let mut mismatches = Vec::new();
    let mut files = 0;
    for (i, cfg) in configs.iter().enumerate() {
        let root = tempfile::tempdir().unwrap();
        let (a, b) = (root.path().join("first"), root.path().join("rerun"));
        let first = experiments::run_experiment(cfg).unwrap();
        let written = first.write(&a).unwrap();
        let meta = a.join(format!("{}_metadata.json", cfg.name()));
        experiments::rerun_from_metadata(&meta).unwrap().write(&b).unwrap();
        for path in written.iter().filter(|p| p.extension().is_some_and(|e| e == "csv")) {
            let name = path.file_name().unwrap();
            files += 1;
            if std::fs::read(path).unwrap() != std::fs::read(b.join(name)).unwrap() {
                mismatches.push(format!("config {i}: {}", name.to_string_lossy()));
            }
        }
    }
    report(
        9,
        "determinism",
        mismatches.is_empty() && files > 0,
        &format!("{files} CSV files compared across {} experiment configs; mismatches: {mismatches:?}", configs.len()),
    );
}
