//! Command-line driver: TOML configs in, CSV/JSON/plot artifacts out.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 non-convergence,
//! 3 verification failure.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use nonconvex_mest::experiments::{self, BoundRun, BreakdownRun, ConvergenceRun, ExperimentConfig, GlassoRun, ResponseNoise, ScalingRun};
use nonconvex_mest::io;
use nonconvex_mest::loss::{self, GlassoData, GlmData, GlmFamily, Loss};
use nonconvex_mest::simulate::{self, child_seed, Covariance, CorruptionMode, DesignSpec, TargetSpec};
use nonconvex_mest::solver::{self, Init, SolverConfig, SolverMode, StationaryPoint};
use nonconvex_mest::verify::{self, PenaltyFamily};
use nonconvex_mest::{Penalty, PenaltyKind};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_VERIFICATION: u8 = 3;

const SOLVE_KEYS: &str = "\
CONFIG KEYS (TOML; every section optional unless noted)

[problem]
  loss = \"linear\" | \"logistic\" | \"glasso\"      (default \"linear\")

[data]                                  read data from CSV files; paths are relative to the config file
  design   = \"z.csv\"      n x p observed covariates, NA marks a missing entry (linear, logistic)
  response = \"y.csv\"      n responses, one per line or one row (linear, logistic; 0/1 for logistic)
  samples  = \"x.csv\"      n x p samples, zero mean assumed (glasso)
  correction = { type = \"none\" }                   clean least squares (default)
             | { type = \"additive\", sigma_w = 0.2 }  additive noise with known Sigma_w = sigma_w^2 I
             | { type = \"missing\", vartheta = 0.1 }  entries missing at random with rate vartheta

[simulate]                              used when [data] is absent
  p = 128            dimension
  k = floor(sqrt p)  sparsity of beta*
  n                  samples; default floor(rescale * k * log p)
  rescale = 20.0
  s = p              off-diagonal nonzeros of Theta* (glasso)
  seed = 0
  covariance = { type = \"identity\" } | { type = \"toeplitz\", zeta = 0.5 }
  corruption = { mode = \"additive_noise\", sigma_w = 0.2 } | { mode = \"missing\", vartheta = 0.1 } | { mode = \"none\" }
  noise = { type = \"snr\", snr = 5.0 } | { type = \"sd\", sd = 0.1 }

[penalty]
  kind = \"l1\" | \"scad\" | \"mcp\" | \"capped_l1\"     (default \"l1\")
  a = 3.7   (scad)    b = 3.5   (mcp)    c = 1.0   (capped_l1)
  lambda             default sqrt(log p / n)

[solver]
  radius             side-constraint radius R; default 1.1 * g(beta*) when simulating, required with [data]
  eta = 1.0          initial inverse stepsize (doubled by backtracking, raised to mu if smaller)
  max_iters = 5000
  tol_obj = 1e-13    relative objective change over a 5-iteration window
  tol_stat = 1e-7    stationarity residual
  init = { type = \"zero\" } | { type = \"random_ball\", radius = 1.5, seed = 0 } | { type = \"given\", beta = [...] }
  mode = \"strict\" | \"experimental_capped_l1\"      (capped_l1 needs the experimental mode)
  psd_floor = 1e-6   glasso eigenvalue floor
  backtracking = true

OUTPUT (under --out)
  solve:    solution.csv, trace.csv, summary.json, and beta_star.csv when simulated
  simulate: design.csv, response.csv, beta_star.csv (linear, logistic) or samples.csv, theta_star.csv (glasso)";

const EXPERIMENT_KEYS: &str = "\
CONFIG KEYS (TOML, top-level keys of the chosen study; all optional)

Common:
  seed = 0                         master seed (convergence: data_seeds = [0])
  penalties = [{ kind = \"l1\" }, { kind = \"scad\", a = 3.7 }, { kind = \"mcp\", b = 3.5 }]
  [solver] eta = 1.0, max_iters = 5000, tol_obj = 1e-13, tol_stat = 1e-7

scaling:      p_list = [64, 128, 256], rescaled_samples = [2, 4, 6, 8, 10], trials = 20,
              corruption = { mode = \"additive_noise\", sigma_w = 0.2 }, noise = { type = \"snr\", snr = 5.0 }
convergence:  loss = \"corrected_linear\" | \"logistic\", p = 128, k = floor(sqrt p), n = floor(20 k log p),
              n_inits = 10, init_radius = 1.5, data_seeds = [0], reference_factor = 10, distinct_tol = 1e-4,
              penalties = [l1, mcp b=3.5, scad a=3.7, scad a=2.5], corruption and noise as in scaling
              (the logistic study uses loss = \"logistic\", p = 64, n_inits = 20)
breakdown:    p = 512, k = floor(sqrt p), rescale = 10, zeta_list = [0.5, 0.9], n_inits = 10, init_radius = 1.5,
              penalties = [l1, scad a=2.5, scad a=3.7], noise = { type = \"sd\", sd = 0.1 }, solver.max_iters = 20000
glasso:       p = 30, s = 30, n_list = [200, 800, 3200], trials = 10, penalty = { kind = \"scad\", a = 3.7 }
bounds:       p = 64, k = 8, rescale = 20, trials = 20, rsc_pairs = 150, noise = { type = \"sd\", sd = 0.1 }

OUTPUT (under --out): <kind>_<table>.csv, <kind>_checks.csv, <kind>_metadata.json, <kind>_<chart>.svg and .gp.
Rerun a study from its metadata with --metadata <kind>_metadata.json.";

#[derive(Debug, Parser)]
#[command(name = "nonconvex-mest", version, about = "Regularized M-estimation with nonconvex losses and penalties")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Output directory; every file is written below it.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Seed override for data generation and random starts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel trials.
    #[arg(long, global = true, env = "NONCONVEX_MEST_THREADS")]
    pub threads: Option<usize>,
    /// Penalty family override or filter.
    #[arg(long, global = true, value_enum)]
    pub penalty: Option<PenaltyArg>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem from data files or a simulated instance.
    #[command(after_help = SOLVE_KEYS)]
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a dataset and write it as CSV.
    #[command(after_help = SOLVE_KEYS)]
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare the closed-form proximal maps with a brute-force oracle.
    #[command(after_help = "CONFIG KEYS (TOML, optional)\n  instances = 1000   random instances per penalty\n  seed = 2024")]
    ProxCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Instances per penalty (overrides the config).
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Run a simulation study and write its report.
    #[command(after_help = EXPERIMENT_KEYS)]
    Experiment {
        kind: ExperimentKind,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Rerun exactly the study recorded in a metadata sidecar.
        #[arg(long, conflicts_with = "config")]
        metadata: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyArg {
    L1,
    Scad,
    Mcp,
    Capped,
}

impl PenaltyArg {
    fn family(self) -> PenaltyFamily {
        match self {
            PenaltyArg::L1 => PenaltyFamily::L1,
            PenaltyArg::Scad => PenaltyFamily::Scad,
            PenaltyArg::Mcp => PenaltyFamily::Mcp,
            PenaltyArg::Capped => PenaltyFamily::CappedL1,
        }
    }

    fn default_kind(self) -> PenaltyKind {
        match self {
            PenaltyArg::L1 => PenaltyKind::L1,
            PenaltyArg::Scad => PenaltyKind::Scad { a: 3.7 },
            PenaltyArg::Mcp => PenaltyKind::Mcp { b: 3.5 },
            PenaltyArg::Capped => PenaltyKind::CappedL1 { c: 1.0 },
        }
    }

    fn matches(self, kind: &PenaltyKind) -> bool {
        matches!(
            (self, kind),
            (PenaltyArg::L1, PenaltyKind::L1)
                | (PenaltyArg::Scad, PenaltyKind::Scad { .. })
                | (PenaltyArg::Mcp, PenaltyKind::Mcp { .. })
                | (PenaltyArg::Capped, PenaltyKind::CappedL1 { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Scaling,
    Convergence,
    Breakdown,
    Glasso,
    Bounds,
}

impl ExperimentKind {
    fn name(self) -> &'static str {
        match self {
            ExperimentKind::Scaling => "scaling",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Breakdown => "breakdown",
            ExperimentKind::Glasso => "glasso",
            ExperimentKind::Bounds => "bounds",
        }
    }
}

/// Failure carrying the exit code it should map to.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn exit(code: u8, message: impl Into<String>) -> anyhow::Error {
    Exit { code, message: message.into() }.into()
}

/// Exit code for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    err.downcast_ref::<Exit>().map_or(EXIT_CONFIG, |e| e.code)
}

pub type ProxFn = dyn Fn(&Penalty, f64, f64) -> f64 + Sync;

pub fn run(cli: &Cli) -> Result<()> {
    run_with_prox(cli, &verify::closed_form_prox)
}

/// Like [`run`], with the proximal map under test injectable for `prox-check`.
pub fn run_with_prox(cli: &Cli, prox: &ProxFn) -> Result<()> {
    if let Some(t) = cli.global.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        // A global pool may already exist when embedded; a local pool is equivalent.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().context("building thread pool")?;
        return pool.install(|| dispatch(cli, prox));
    }
    dispatch(cli, prox)
}

fn dispatch(cli: &Cli, prox: &ProxFn) -> Result<()> {
    match &cli.command {
        Command::Solve { config } => cmd_solve(&cli.global, config.as_deref()),
        Command::Simulate { config } => cmd_simulate(&cli.global, config.as_deref()),
        Command::ProxCheck { config, instances } => cmd_prox_check(&cli.global, config.as_deref(), *instances, prox),
        Command::Experiment { kind, config, metadata } => cmd_experiment(&cli.global, *kind, config.as_deref(), metadata.as_deref()),
    }
}

fn read_toml<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Linear,
    Logistic,
    Glasso,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(default)]
    pub loss: LossKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Correction {
    #[default]
    None,
    Additive {
        sigma_w: f64,
    },
    Missing {
        vartheta: f64,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub design: Option<PathBuf>,
    pub response: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    #[serde(default)]
    pub correction: Correction,
}

fn default_p() -> usize {
    128
}
fn default_rescale() -> f64 {
    20.0
}
fn default_corruption() -> CorruptionMode {
    CorruptionMode::AdditiveNoise { sigma_w: 0.2 }
}
fn default_noise() -> ResponseNoise {
    ResponseNoise::Snr { snr: 5.0 }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_p")]
    pub p: usize,
    pub k: Option<usize>,
    pub n: Option<usize>,
    #[serde(default = "default_rescale")]
    pub rescale: f64,
    pub s: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub covariance: Covariance,
    #[serde(default = "default_corruption")]
    pub corruption: CorruptionMode,
    #[serde(default = "default_noise")]
    pub noise: ResponseNoise,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            p: default_p(),
            k: None,
            n: None,
            rescale: default_rescale(),
            s: None,
            seed: 0,
            covariance: Covariance::Identity,
            corruption: default_corruption(),
            noise: default_noise(),
        }
    }
}

impl SimulateSection {
    fn sizes(&self) -> Result<(usize, usize, usize)> {
        if self.p < 2 {
            bail!("simulate.p must be at least 2");
        }
        let k = self.k.unwrap_or_else(|| simulate::default_k(self.p));
        if k > self.p {
            bail!("simulate.k = {k} exceeds p = {}", self.p);
        }
        let n = self.n.unwrap_or_else(|| simulate::rescaled_sample_size(self.rescale, k, self.p));
        if n < 2 {
            bail!("simulate.n must be at least 2");
        }
        Ok((self.p, k, n))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    pub kind: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
}

impl PenaltySection {
    fn kind(&self, overridden: Option<PenaltyArg>) -> Result<PenaltyKind> {
        let name = match overridden {
            Some(PenaltyArg::L1) => "l1",
            Some(PenaltyArg::Scad) => "scad",
            Some(PenaltyArg::Mcp) => "mcp",
            Some(PenaltyArg::Capped) => "capped_l1",
            None => self.kind.as_deref().unwrap_or("l1"),
        };
        Ok(match name {
            "l1" | "lasso" => PenaltyKind::L1,
            "scad" => PenaltyKind::Scad { a: self.a.unwrap_or(3.7) },
            "mcp" => PenaltyKind::Mcp { b: self.b.unwrap_or(3.5) },
            "capped_l1" | "capped" => PenaltyKind::CappedL1 { c: self.c.unwrap_or(1.0) },
            other => bail!("penalty.kind: unknown penalty {other:?}; expected l1, scad, mcp or capped_l1"),
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub radius: Option<f64>,
    pub eta: Option<f64>,
    pub max_iters: Option<usize>,
    pub tol_obj: Option<f64>,
    pub tol_stat: Option<f64>,
    pub init: Option<Init>,
    pub mode: Option<SolverMode>,
    pub psd_floor: Option<f64>,
    pub backtracking: Option<bool>,
}

impl SolverSection {
    fn build(&self, radius: f64) -> SolverConfig {
        let mut c = SolverConfig::new(radius);
        if let Some(v) = self.eta {
            c.eta = v;
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        if let Some(v) = self.tol_obj {
            c.tol_obj = v;
        }
        if let Some(v) = self.tol_stat {
            c.tol_stat = v;
        }
        if let Some(v) = &self.init {
            c.init = v.clone();
        }
        if let Some(v) = self.mode {
            c.mode = v;
        }
        if let Some(v) = self.psd_floor {
            c.psd_floor = v;
        }
        if let Some(v) = self.backtracking {
            c.backtracking = v;
        }
        c
    }
}

/// The `solve`/`simulate` config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveFile {
    #[serde(default)]
    pub problem: ProblemSection,
    pub data: Option<DataSection>,
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub solver: SolverSection,
}

/// A generated dataset with its truth.
struct Simulated {
    /// Observed design (linear, logistic) or samples (glasso).
    design: DMatrix<f64>,
    response: Option<DVector<f64>>,
    /// `β*`, or `vec(Θ*)` for glasso.
    truth: DVector<f64>,
    truth_matrix: Option<DMatrix<f64>>,
}

fn simulate_data(loss: LossKind, sim: &SimulateSection) -> Result<Simulated> {
    let (p, k, n) = sim.sizes()?;
    let seed = sim.seed;
    if loss == LossKind::Glasso {
        let sp = simulate::gen_sparse_precision(p, sim.s.unwrap_or(p), n, seed)?;
        return Ok(Simulated {
            design: sp.samples,
            response: None,
            truth: loss::flatten(&sp.theta_star),
            truth_matrix: Some(sp.theta_star),
        });
    }
    let beta = simulate::gen_target(&TargetSpec {
        p,
        k: Some(k),
        normalize: true,
        seed: child_seed(seed, 0),
    })?;
    let x = simulate::gen_design(&DesignSpec {
        n,
        p,
        covariance: sim.covariance,
        seed: child_seed(seed, 1),
    })?;
    let (design, y) = match loss {
        LossKind::Linear => {
            let sd = match sim.noise {
                ResponseNoise::Snr { snr } => simulate::noise_sd_for_snr(&beta, &sim.covariance.matrix(p), snr)?,
                ResponseNoise::Sd { sd } => sd,
            };
            let y = simulate::gen_linear_response(&x, &beta, sd, child_seed(seed, 2))?;
            (simulate::corrupt(&x, &sim.corruption, child_seed(seed, 3))?, y)
        }
        LossKind::Logistic => {
            let y = simulate::gen_logistic_response(&x, &beta, child_seed(seed, 2))?;
            (x, y)
        }
        LossKind::Glasso => unreachable!(),
    };
    Ok(Simulated {
        design,
        response: Some(y),
        truth: beta,
        truth_matrix: None,
    })
}

fn linear_loss(z: &DMatrix<f64>, y: &DVector<f64>, correction: Correction) -> Result<Loss> {
    let p = z.ncols();
    let data = match correction {
        Correction::None => loss::clean_least_squares(z, y)?,
        Correction::Additive { sigma_w } => loss::build_corrected_gamma(z, y, &(DMatrix::identity(p, p) * (sigma_w * sigma_w)))?,
        Correction::Missing { vartheta } => loss::build_missing_gamma(z, y, vartheta)?,
    };
    Ok(Loss::CorrectedLinear(data))
}

fn glasso_loss(samples: &DMatrix<f64>) -> Result<Loss> {
    let n = samples.nrows();
    if n == 0 {
        bail!("glasso samples are empty");
    }
    let sigma = samples.transpose() * samples / n as f64;
    Ok(Loss::Glasso(GlassoData::new(sigma)?.with_samples(n)))
}

fn correction_for(mode: &CorruptionMode) -> Correction {
    match *mode {
        CorruptionMode::AdditiveNoise { sigma_w } => Correction::Additive { sigma_w },
        CorruptionMode::Missing { vartheta } => Correction::Missing { vartheta },
        CorruptionMode::None => Correction::None,
    }
}

fn resolve(base: Option<&Path>, p: &Path) -> PathBuf {
    match base.and_then(|b| b.parent()) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn need<'a>(field: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    field.as_ref().with_context(|| format!("data.{key} is required for this loss"))
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    loss: &'a str,
    penalty: &'a Penalty,
    radius: f64,
    seed: Option<u64>,
    #[serde(flatten)]
    point: &'a StationaryPoint,
    l2_error: Option<f64>,
}

pub fn cmd_solve(global: &GlobalArgs, config: Option<&Path>) -> Result<()> {
    let mut file: SolveFile = read_toml(config)?;
    let loss_kind = file.problem.loss;
    let (loss, truth, seed) = match (&file.data, &mut file.simulate) {
        (Some(_), Some(_)) => bail!("config has both [data] and [simulate]; keep one"),
        (Some(data), None) => {
            let loss = match loss_kind {
                LossKind::Linear => {
                    let z = io::read_matrix_file(&resolve(config, need(&data.design, "design")?))?;
                    let y = io::read_vector_file(&resolve(config, need(&data.response, "response")?))?;
                    linear_loss(&z, &y, data.correction)?
                }
                LossKind::Logistic => {
                    let x = io::read_matrix_file(&resolve(config, need(&data.design, "design")?))?;
                    let y = io::read_vector_file(&resolve(config, need(&data.response, "response")?))?;
                    Loss::Glm(GlmData::new(x, y, GlmFamily::Logistic)?)
                }
                LossKind::Glasso => glasso_loss(&io::read_matrix_file(&resolve(config, need(&data.samples, "samples")?))?)?,
            };
            (loss, None, None)
        }
        (None, sim) => {
            let sim = sim.get_or_insert_with(SimulateSection::default);
            if let Some(s) = global.seed {
                sim.seed = s;
            }
            let data = simulate_data(loss_kind, sim)?;
            let loss = match loss_kind {
                LossKind::Linear => linear_loss(&data.design, data.response.as_ref().expect("response"), correction_for(&sim.corruption))?,
                LossKind::Logistic => Loss::Glm(GlmData::new(data.design.clone(), data.response.clone().expect("response"), GlmFamily::Logistic)?),
                LossKind::Glasso => glasso_loss(&data.design)?,
            };
            (loss, Some(data), Some(sim.seed))
        }
    };

    let kind = file.penalty.kind(global.penalty)?;
    let (p, n) = (loss.p(), loss.n_samples().unwrap_or(2));
    let lambda = file.penalty.lambda.unwrap_or_else(|| simulate::default_lambda(p.max(2), n.max(2)));
    let penalty = Penalty::new(lambda, kind).context("invalid [penalty]")?;
    let mode = file
        .solver
        .mode
        .unwrap_or(if matches!(kind, PenaltyKind::CappedL1 { .. }) { SolverMode::ExperimentalCappedL1 } else { SolverMode::Strict });
    let radius = match (file.solver.radius, &truth) {
        (Some(r), _) => r,
        (None, Some(t)) => solver::default_radius(&penalty, t.truth.as_slice(), mode)?,
        (None, None) => bail!("solver.radius is required when data comes from files"),
    };
    let mut cfg = file.solver.build(radius);
    cfg.mode = mode;
    if let (Some(s), Init::RandomBall { seed, .. }) = (global.seed, &mut cfg.init) {
        *seed = s;
    }
    cfg.validate().context("invalid [solver]")?;
    let sol = solver::run(&loss, &penalty, &cfg)?;

    fs::create_dir_all(&global.out).with_context(|| format!("creating {}", global.out.display()))?;
    let beta = sol.point.beta_vector();
    write_file(&global.out.join("solution.csv"), |w| io::write_vector(w, "beta", beta.as_slice()))?;
    write_file(&global.out.join("trace.csv"), |w| solver::write_trace(w, &sol.state.trace))?;
    let l2_error = truth.as_ref().map(|t| (&beta - &t.truth).norm());
    if let Some(t) = &truth {
        write_file(&global.out.join("beta_star.csv"), |w| io::write_vector(w, "beta_star", t.truth.as_slice()))?;
    }
    let summary = SolveSummary {
        loss: loss.kind_name(),
        penalty: &penalty,
        radius,
        seed,
        point: &sol.point,
        l2_error,
    };
    fs::write(global.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!(
        "{} after {} iterations, objective {:.10}, residual {:.3e}{}",
        if sol.point.converged { "converged" } else { "iteration limit reached" },
        sol.point.iterations,
        sol.point.objective,
        sol.point.residual,
        l2_error.map_or(String::new(), |e| format!(", l2 error {e:.6}"))
    );
    if !sol.point.converged {
        return Err(exit(EXIT_NOT_CONVERGED, format!("no convergence within {} iterations", cfg.max_iters)));
    }
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(fs::File) -> nonconvex_mest::Result<()>) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f(file).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_simulate(global: &GlobalArgs, config: Option<&Path>) -> Result<()> {
    let file: SolveFile = read_toml(config)?;
    if file.data.is_some() {
        bail!("simulate takes a [simulate] section, not [data]");
    }
    let mut sim = file.simulate.unwrap_or_default();
    if let Some(s) = global.seed {
        sim.seed = s;
    }
    let data = simulate_data(file.problem.loss, &sim)?;
    fs::create_dir_all(&global.out).with_context(|| format!("creating {}", global.out.display()))?;
    let out = &global.out;
    match (&data.response, &data.truth_matrix) {
        (Some(y), _) => {
            write_file(&out.join("design.csv"), |w| io::write_matrix(w, &data.design))?;
            write_file(&out.join("response.csv"), |w| io::write_vector(w, "y", y.as_slice()))?;
            write_file(&out.join("beta_star.csv"), |w| io::write_vector(w, "beta_star", data.truth.as_slice()))?;
        }
        (None, Some(theta)) => {
            write_file(&out.join("samples.csv"), |w| io::write_matrix(w, &data.design))?;
            write_file(&out.join("theta_star.csv"), |w| io::write_matrix(w, theta))?;
        }
        (None, None) => unreachable!(),
    }
    println!("wrote {} x {} dataset to {}", data.design.nrows(), data.design.ncols(), out.display());
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProxCheckFile {
    #[serde(default = "ProxCheckFile::default_instances")]
    pub instances: usize,
    #[serde(default = "ProxCheckFile::default_seed")]
    pub seed: u64,
}

impl ProxCheckFile {
    fn default_instances() -> usize {
        1000
    }
    fn default_seed() -> u64 {
        2024
    }
}

impl Default for ProxCheckFile {
    fn default() -> Self {
        ProxCheckFile {
            instances: Self::default_instances(),
            seed: Self::default_seed(),
        }
    }
}

pub fn cmd_prox_check(global: &GlobalArgs, config: Option<&Path>, instances: Option<usize>, prox: &ProxFn) -> Result<()> {
    let file: ProxCheckFile = read_toml(config)?;
    let count = instances.unwrap_or(file.instances);
    if count == 0 {
        bail!("instances must be at least 1");
    }
    let families: Vec<PenaltyFamily> = match global.penalty {
        Some(p) => vec![p.family()],
        None => PenaltyFamily::ALL.to_vec(),
    };
    let results = verify::run_prox_check(&families, count, global.seed.unwrap_or(file.seed), prox);
    let mut failed = false;
    for r in &results {
        println!(
            "{:<9} {} instances, max objective gap {:.3e} -> {}",
            format!("{:?}", r.family),
            r.instances,
            r.max_objective_gap,
            if r.passed { "ok" } else { "MISMATCH" }
        );
        if !r.passed {
            failed = true;
            if let Some(w) = &r.worst {
                println!(
                    "  worst instance: penalty {:?}, lambda {}, z {}, nu {}; closed form {} (objective {}), oracle {} (objective {})",
                    w.instance.penalty.kind(),
                    w.instance.penalty.lambda(),
                    w.instance.z,
                    w.instance.nu,
                    w.closed_form,
                    w.closed_form_objective,
                    w.oracle,
                    w.oracle_objective
                );
            }
        }
    }
    if failed {
        return Err(exit(EXIT_VERIFICATION, format!("proximal map disagrees with the oracle beyond {:e}", verify::PROX_OBJECTIVE_TOL)));
    }
    Ok(())
}

fn filter_penalties(list: &mut Vec<PenaltyKind>, sel: Option<PenaltyArg>) -> Result<()> {
    if let Some(sel) = sel {
        list.retain(|k| sel.matches(k));
        if list.is_empty() {
            list.push(sel.default_kind());
        }
    }
    if list.is_empty() {
        bail!("penalties must not be empty");
    }
    Ok(())
}

/// Loads the study config for `kind`, applying `--seed` and `--penalty`.
pub fn experiment_config(global: &GlobalArgs, kind: ExperimentKind, config: Option<&Path>) -> Result<ExperimentConfig> {
    let sel = global.penalty;
    let cfg = match kind {
        ExperimentKind::Scaling => {
            let mut c: ScalingRun = read_toml(config)?;
            filter_penalties(&mut c.penalties, sel)?;
            ExperimentConfig::Scaling(c)
        }
        ExperimentKind::Convergence => {
            let mut c: ConvergenceRun = read_toml(config)?;
            filter_penalties(&mut c.penalties, sel)?;
            ExperimentConfig::Convergence(c)
        }
        ExperimentKind::Breakdown => {
            let mut c: BreakdownRun = read_toml(config)?;
            filter_penalties(&mut c.penalties, sel)?;
            ExperimentConfig::Breakdown(c)
        }
        ExperimentKind::Glasso => {
            let mut c: GlassoRun = read_toml(config)?;
            if let Some(s) = sel {
                if !s.matches(&c.penalty) {
                    c.penalty = s.default_kind();
                }
            }
            ExperimentConfig::Glasso(c)
        }
        ExperimentKind::Bounds => {
            let mut c: BoundRun = read_toml(config)?;
            filter_penalties(&mut c.penalties, sel)?;
            ExperimentConfig::Bounds(c)
        }
    };
    Ok(match global.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

pub fn cmd_experiment(global: &GlobalArgs, kind: ExperimentKind, config: Option<&Path>, metadata: Option<&Path>) -> Result<()> {
    let cfg = match metadata {
        Some(m) => {
            let meta = experiments::read_metadata(m).with_context(|| format!("reading metadata {}", m.display()))?;
            if meta.experiment.name() != kind.name() {
                bail!("metadata describes a {} study, not {}", meta.experiment.name(), kind.name());
            }
            meta.experiment
        }
        None => experiment_config(global, kind, config)?,
    };
    log::info!("running {} study", cfg.name());
    let report = experiments::run_experiment(&cfg)?;
    let written = report.write(&global.out)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "pass" } else { "fail" }, c.name, c.detail);
    }
    println!("wrote {} files to {}", written.len(), global.out.display());
    Ok(())
}
