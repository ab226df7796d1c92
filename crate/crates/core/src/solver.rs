//! Composite gradient descent over the side constraint `g_{λ,μ}(β) ≤ R`.
//!
//! Each step moves along the gradient of the shifted loss
//! `L̄(β) = L(β) − μ‖β‖²/2`, applies the penalty prox, and falls back to the
//! Euclidean projection onto the `g`-ball when the prox output is
//! infeasible. The inverse stepsize `η` is doubled until the quadratic
//! upper model holds at the candidate.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{as_matrix, flatten, symmetrize, Loss};
use crate::penalty::{capped_prox, subdifferential, Penalty, PenaltyKind, ProxRequest};
use crate::simulate::rng_for;

/// Bisection cap for the `g`-ball projection.
pub const PROJECTION_MAX_STEPS: usize = 200;
/// Relative accuracy of `g(β) = R` after projection.
pub const PROJECTION_TOL: f64 = 1e-9;
/// Relative width of the band `g ≥ R(1 − tol)` treated as the boundary.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// Objective-change window of the stopping rule.
pub const OBJECTIVE_WINDOW: usize = 5;
/// Unnamed universal constant inside `φ(n, p, k)`; diagnostic only.
pub const CONTRACTION_CONSTANT: f64 = 1.0;

const MAX_ETA_DOUBLINGS: usize = 100;

/// Trace flag: the step used the `g`-ball projection.
pub const FLAG_PROJECTED: u8 = 1;
/// Trace flag: eigenvalues were clipped to restore `Θ ⪰ psd_floor·I`.
pub const FLAG_PSD_CLIPPED: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Init {
    Zero,
    Given { beta: Vec<f64> },
    /// Uniform point in the ℓ₂ ball, projected onto the `g`-ball if needed.
    RandomBall { radius: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Strict,
    /// Capped-ℓ1 with side constraint `‖β‖₁ ≤ R` and the exact scalar prox.
    /// No convergence guarantee backs this mode.
    ExperimentalCappedL1,
}

fn default_eta() -> f64 {
    1.0
}
fn default_max_iters() -> usize {
    5000
}
fn default_tol_obj() -> f64 {
    1e-13
}
fn default_tol_stat() -> f64 {
    1e-7
}
fn default_init() -> Init {
    Init::Zero
}
fn default_mode() -> SolverMode {
    SolverMode::Strict
}
fn default_psd_floor() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Initial inverse stepsize; raised to `μ` if smaller.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Side-constraint radius `R`.
    pub radius: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Relative objective change over the window that stops the run.
    #[serde(default = "default_tol_obj")]
    pub tol_obj: f64,
    #[serde(default = "default_tol_stat")]
    pub tol_stat: f64,
    #[serde(default = "default_init")]
    pub init: Init,
    #[serde(default = "default_mode")]
    pub mode: SolverMode,
    #[serde(default = "default_psd_floor")]
    pub psd_floor: f64,
    #[serde(default = "default_true")]
    pub backtracking: bool,
}

impl SolverConfig {
    pub fn new(radius: f64) -> Self {
        SolverConfig {
            eta: default_eta(),
            radius,
            max_iters: default_max_iters(),
            tol_obj: default_tol_obj(),
            tol_stat: default_tol_stat(),
            init: default_init(),
            mode: default_mode(),
            psd_floor: default_psd_floor(),
            backtracking: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("eta", self.eta)?;
        pos("radius", self.radius)?;
        pos("tol_obj", self.tol_obj)?;
        pos("tol_stat", self.tol_stat)?;
        pos("psd_floor", self.psd_floor)?;
        if let Init::RandomBall { radius, .. } = self.init {
            pos("init radius", radius)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    /// `‖β^t − β_ref‖₂` when a reference is supplied.
    pub opt_error: Option<f64>,
    pub stat_error: f64,
    pub eta: f64,
    pub projected_flag: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub beta_t: DVector<f64>,
    pub t: usize,
    /// `φ(β^t) = L(β^t) + ρ_λ(β^t)`.
    pub objective: f64,
    pub eta: f64,
    pub flag: u8,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Stationary,
    ObjectivePlateau,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPoint {
    pub beta: Vec<f64>,
    pub residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub eta: f64,
}

impl StationaryPoint {
    pub fn beta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub point: StationaryPoint,
    pub state: SolverState,
}

enum Side {
    Weak(f64),
    L1Norm,
}

struct Ctx<'a> {
    loss: &'a Loss,
    pen: &'a Penalty,
    mu: f64,
    side: Side,
    radius: f64,
    psd_floor: f64,
}

impl<'a> Ctx<'a> {
    fn new(loss: &'a Loss, pen: &'a Penalty, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (mu, side) = match (cfg.mode, pen.kind()) {
            (SolverMode::Strict, _) => {
                let mu = pen.weak_convexity().ok_or(Error::UnsupportedPenalty("capped-l1"))?;
                (mu, Side::Weak(mu))
            }
            (SolverMode::ExperimentalCappedL1, PenaltyKind::CappedL1 { .. }) => (0.0, Side::L1Norm),
            (SolverMode::ExperimentalCappedL1, k) => {
                return Err(Error::InvalidParameter(format!(
                    "experimental capped-l1 mode requires the capped-l1 penalty, got {}",
                    k.name()
                )))
            }
        };
        Ok(Ctx {
            loss,
            pen,
            mu,
            side,
            radius: cfg.radius,
            psd_floor: cfg.psd_floor,
        })
    }

    fn start_eta(&self, cfg: &SolverConfig) -> f64 {
        cfg.eta.max(self.mu)
    }

    fn side(&self, beta: &[f64]) -> f64 {
        match self.side {
            Side::Weak(mu) => self.pen.side_function_with(beta, mu),
            Side::L1Norm => beta.iter().map(|b| b.abs()).sum(),
        }
    }

    fn objective(&self, beta: &DVector<f64>) -> Result<f64> {
        Ok(self.loss.value(beta)? + self.pen.total(beta.as_slice()))
    }

    fn shifted_loss(&self, beta: &DVector<f64>) -> Result<f64> {
        Ok(self.loss.value(beta)? - 0.5 * self.mu * beta.norm_squared())
    }

    fn on_boundary(&self, beta: &DVector<f64>) -> bool {
        self.side(beta.as_slice()) >= self.radius * (1.0 - BOUNDARY_TOL)
    }

    fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self.side {
            Side::Weak(mu) => project_with_mu(v, self.pen, mu, self.radius),
            Side::L1Norm => unreachable!("capped-l1 steps project inside the prox"),
        }
    }

    /// Composite step at inverse stepsize `eta` without the line search.
    fn candidate(&self, beta: &DVector<f64>, grad_bar: &DVector<f64>, eta: f64) -> Result<(DVector<f64>, u8)> {
        let z = beta - grad_bar / eta;
        let mut flag = 0;
        let mut out = match self.side {
            Side::Weak(mu) => {
                let req = ProxRequest::for_step(z.as_slice().to_vec(), eta, mu);
                let b = DVector::from_vec(self.pen.prox_vector(&req)?);
                if self.side(b.as_slice()) > self.radius {
                    flag |= FLAG_PROJECTED;
                    self.project(&z)?
                } else {
                    b
                }
            }
            Side::L1Norm => {
                let (b, projected) = capped_l1_step(self.pen, &z, 1.0 / eta, self.radius)?;
                if projected {
                    flag |= FLAG_PROJECTED;
                }
                b
            }
        };
        if let Some(p) = self.loss.matrix_side() {
            let (fixed, clipped) = clip_spectrum(&out, p, self.psd_floor);
            out = fixed;
            if clipped {
                flag |= FLAG_PSD_CLIPPED;
                if self.side(out.as_slice()) > self.radius {
                    flag |= FLAG_PROJECTED;
                    out = self.project(&out)?;
                }
            }
        }
        Ok((out, flag))
    }

    /// Composite step with the doubling line search on `η`.
    fn step(&self, beta: &DVector<f64>, grad: &DVector<f64>, eta: f64, backtracking: bool) -> Result<(DVector<f64>, f64, u8)> {
        let grad_bar = grad - beta * self.mu;
        let base = self.shifted_loss(beta)?;
        let mut eta = eta;
        for _ in 0..MAX_ETA_DOUBLINGS {
            let (cand, flag) = self.candidate(beta, &grad_bar, eta)?;
            let value = match self.shifted_loss(&cand) {
                Ok(v) => v,
                Err(Error::NotPositiveDefinite) => {
                    eta *= 2.0;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if !backtracking {
                return Ok((cand, eta, flag));
            }
            let delta = &cand - beta;
            let taylor = value - base - grad_bar.dot(&delta);
            let slack = 1e-12 * (1.0 + base.abs());
            if taylor.is_finite() && taylor <= 0.5 * eta * delta.norm_squared() + slack {
                return Ok((cand, eta, flag));
            }
            eta *= 2.0;
        }
        Err(Error::NonFinite(format!(
            "line search: no acceptable step after {MAX_ETA_DOUBLINGS} doublings of eta"
        )))
    }

    /// ℓ∞ distance of `−∇L(β)` to the penalty subdifferential.
    fn interior_residual(&self, beta: &DVector<f64>, grad: &DVector<f64>) -> f64 {
        beta.iter()
            .zip(grad.iter())
            .map(|(&b, &g)| {
                let (lo, hi) = subdifferential(self.pen, b);
                let target = -g;
                if target < lo {
                    lo - target
                } else if target > hi {
                    target - hi
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    fn residual(&self, beta: &DVector<f64>, grad: &DVector<f64>, eta: f64) -> Result<f64> {
        if self.on_boundary(beta) {
            let grad_bar = grad - beta * self.mu;
            let (cand, _) = self.candidate(beta, &grad_bar, eta)?;
            Ok(eta * (beta - cand).norm())
        } else {
            Ok(self.interior_residual(beta, grad))
        }
    }

    fn initial_point(&self, cfg: &SolverConfig) -> Result<(DVector<f64>, u8)> {
        let dim = self.loss.dim();
        let mut beta = match &cfg.init {
            Init::Zero => match self.loss {
                Loss::Glasso(d) => {
                    let s = d.sigma_hat();
                    let lam = self.pen.lambda();
                    flatten(&DMatrix::from_fn(d.p(), d.p(), |i, j| {
                        if i == j {
                            1.0 / (s[(i, i)] + lam)
                        } else {
                            0.0
                        }
                    }))
                }
                _ => DVector::zeros(dim),
            },
            Init::Given { beta } => {
                if beta.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "initial point has length {} but the loss expects {dim}",
                        beta.len()
                    )));
                }
                DVector::from_column_slice(beta)
            }
            Init::RandomBall { radius, seed } => {
                if self.loss.matrix_side().is_some() {
                    return Err(Error::InvalidParameter(
                        "random-ball initialization is not available for the graphical Lasso".into(),
                    ));
                }
                random_ball_point(dim, *radius, *seed)
            }
        };
        let mut flag = 0;
        if let Some(p) = self.loss.matrix_side() {
            let (fixed, clipped) = clip_spectrum(&beta, p, self.psd_floor);
            beta = fixed;
            if clipped {
                flag |= FLAG_PSD_CLIPPED;
            }
        }
        if self.side(beta.as_slice()) > self.radius {
            flag |= FLAG_PROJECTED;
            beta = match self.side {
                Side::Weak(_) => self.project(&beta)?,
                Side::L1Norm => DVector::from_vec(project_l1_ball(beta.as_slice(), self.radius)),
            };
        }
        Ok((beta, flag))
    }
}

/// Uniform draw from the ℓ₂ ball of the given radius.
pub fn random_ball_point(dim: usize, radius: f64, seed: u64) -> DVector<f64> {
    let mut rng = rng_for(seed);
    let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim.max(1) as f64);
    let norm = g.norm();
    if norm == 0.0 {
        return g;
    }
    g * (r / norm)
}

/// `1.1 · g_{λ,μ}(β*)` (strict mode) or `1.1 · ‖β*‖₁` (capped-ℓ1 mode).
pub fn default_radius(penalty: &Penalty, beta_star: &[f64], mode: SolverMode) -> Result<f64> {
    match mode {
        SolverMode::Strict => Ok(1.1 * penalty.side_function(beta_star)?),
        SolverMode::ExperimentalCappedL1 => Ok(1.1 * beta_star.iter().map(|b| b.abs()).sum::<f64>()),
    }
}

/// `1.1 · ρ_λ(β*) / λ`. Smaller than [`default_radius`] for nonconvex
/// penalties, and then may exclude `β*` itself.
pub fn literal_radius(penalty: &Penalty, beta_star: &[f64]) -> f64 {
    1.1 * penalty.total(beta_star) / penalty.lambda()
}

/// Symmetrizes the `p × p` matrix stored in `v` and lifts eigenvalues below
/// `floor` up to it. Reports whether any eigenvalue was clipped.
fn clip_spectrum(v: &DVector<f64>, p: usize, floor: f64) -> (DVector<f64>, bool) {
    let m = symmetrize(&as_matrix(v, p));
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&e| e >= floor) {
        return (flatten(&m), false);
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.max(floor)));
    let fixed = symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()));
    (flatten(&fixed), true)
}

/// Euclidean projection of `v` onto `{β : g_{λ,μ}(β) ≤ R}`.
///
/// The multiplier `s` of the constraint is found by bisection; for fixed
/// `s` the minimizer is the coordinatewise prox of `v/(1 + sμ/λ)` with weight
/// `(s/λ)/(1 + sμ/λ)`. Points already inside the ball are returned as is.
pub fn project_g_ball(v: &DVector<f64>, penalty: &Penalty, radius: f64) -> Result<DVector<f64>> {
    let mu = penalty.weak_convexity().ok_or(Error::UnsupportedPenalty("capped-l1"))?;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    project_with_mu(v, penalty, mu, radius)
}

fn project_with_mu(v: &DVector<f64>, pen: &Penalty, mu: f64, radius: f64) -> Result<DVector<f64>> {
    let g = |b: &DVector<f64>| pen.side_function_with(b.as_slice(), mu);
    if g(v) <= radius {
        return Ok(v.clone());
    }
    let lam = pen.lambda();
    let at = |s: f64| {
        let d = 1.0 + s * mu / lam;
        let nu = (s / lam) / d;
        v.map(|vj| pen.prox_unchecked(vj / d, nu))
    };
    let mut lo = 0.0;
    let mut hi = lam;
    let mut steps = 0;
    let mut best = at(hi);
    while g(&best) > radius {
        lo = hi;
        hi *= 2.0;
        best = at(hi);
        steps += 1;
        if steps >= PROJECTION_MAX_STEPS {
            return Err(Error::ProjectionNotConverged(steps));
        }
    }
    while steps < PROJECTION_MAX_STEPS {
        if radius - g(&best) <= PROJECTION_TOL * radius {
            return Ok(best);
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let b = at(mid);
        if g(&b) > radius {
            lo = mid;
        } else {
            hi = mid;
            best = b;
        }
        steps += 1;
    }
    if radius - g(&best) <= BOUNDARY_TOL * radius {
        Ok(best)
    } else {
        Err(Error::ProjectionNotConverged(steps))
    }
}

/// Euclidean projection onto the ℓ₁ ball by soft-thresholding at the
/// bisected level.
fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return v.to_vec();
    }
    let soft = |t: f64| -> Vec<f64> { v.iter().map(|&x| x.signum() * (x.abs() - t).max(0.0)).collect() };
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    for _ in 0..PROJECTION_MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        if soft(mid).iter().map(|x| x.abs()).sum::<f64>() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    soft(hi)
}

/// Capped-ℓ1 step: exact scalar prox, with an ℓ₁ multiplier bisected until
/// `‖β‖₁ ≤ R`. Returns the step and whether the multiplier was active.
fn capped_l1_step(pen: &Penalty, z: &DVector<f64>, nu: f64, radius: f64) -> Result<(DVector<f64>, bool)> {
    let PenaltyKind::CappedL1 { c } = pen.kind() else {
        unreachable!("capped-l1 step with another penalty")
    };
    let lam = pen.lambda();
    let at = |extra: f64| z.map(|zj| capped_prox(lam, c, zj, nu, extra));
    let l1 = |b: &DVector<f64>| b.iter().map(|x| x.abs()).sum::<f64>();
    let free = at(0.0);
    if l1(&free) <= radius {
        return Ok((free, false));
    }
    let mut lo = 0.0;
    let mut hi = z.amax().max(f64::MIN_POSITIVE);
    let mut best = at(hi);
    for _ in 0..PROJECTION_MAX_STEPS {
        if radius - l1(&best) <= PROJECTION_TOL * radius {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let b = at(mid);
        if l1(&b) > radius {
            lo = mid;
        } else {
            hi = mid;
            best = b;
        }
    }
    Ok((best, true))
}

fn check_finite(v: &DVector<f64>, what: &str, t: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} at iteration {t}")))
    }
}

/// The starting state: initial point, objective and a single trace row.
pub fn initial_state(loss: &Loss, penalty: &Penalty, cfg: &SolverConfig) -> Result<SolverState> {
    let ctx = Ctx::new(loss, penalty, cfg)?;
    let (beta, flag) = ctx.initial_point(cfg)?;
    let objective = ctx.objective(&beta)?;
    Ok(SolverState {
        beta_t: beta,
        t: 0,
        objective,
        eta: ctx.start_eta(cfg),
        flag,
        trace: Vec::new(),
    })
}

/// One composite gradient step from `state`, with the line search when
/// `cfg.backtracking` is set. The returned state carries the new iterate,
/// objective and the (possibly increased) `η`.
pub fn composite_step(state: &SolverState, loss: &Loss, penalty: &Penalty, cfg: &SolverConfig) -> Result<SolverState> {
    let ctx = Ctx::new(loss, penalty, cfg)?;
    let grad = loss.gradient(&state.beta_t)?;
    check_finite(&grad, "gradient", state.t)?;
    let eta = state.eta.max(ctx.mu);
    let (beta, eta, flag) = ctx.step(&state.beta_t, &grad, eta, cfg.backtracking)?;
    let objective = ctx.objective(&beta)?;
    let mut trace = state.trace.clone();
    trace.push(TraceRow {
        iter: state.t + 1,
        objective,
        opt_error: None,
        stat_error: f64::NAN,
        eta,
        projected_flag: flag,
    });
    Ok(SolverState {
        beta_t: beta,
        t: state.t + 1,
        objective,
        eta,
        flag,
        trace,
    })
}

/// Stationarity residual of `beta`: the ℓ∞ distance of `−∇L(β)` to the
/// penalty subdifferential in the interior of the `g`-ball, and the scaled
/// gradient mapping `η‖β − T_η(β)‖₂` on its boundary.
pub fn check_stationarity(beta: &DVector<f64>, loss: &Loss, penalty: &Penalty, cfg: &SolverConfig) -> Result<f64> {
    let ctx = Ctx::new(loss, penalty, cfg)?;
    let grad = loss.gradient(beta)?;
    ctx.residual(beta, &grad, ctx.start_eta(cfg))
}

pub fn run(loss: &Loss, penalty: &Penalty, cfg: &SolverConfig) -> Result<Solution> {
    run_with_reference(loss, penalty, cfg, None)
}

/// Runs to convergence, recording `‖β^t − reference‖₂` in the trace when a
/// reference point is given.
pub fn run_with_reference(loss: &Loss, penalty: &Penalty, cfg: &SolverConfig, reference: Option<&DVector<f64>>) -> Result<Solution> {
    run_observed(loss, penalty, cfg, reference, |_, _| {})
}

/// As [`run_with_reference`], calling `observer(t, β^t)` on every recorded
/// iterate.
pub fn run_observed<F>(loss: &Loss, penalty: &Penalty, cfg: &SolverConfig, reference: Option<&DVector<f64>>, mut observer: F) -> Result<Solution>
where
    F: FnMut(usize, &DVector<f64>),
{
    let ctx = Ctx::new(loss, penalty, cfg)?;
    let (mut beta, mut flag) = ctx.initial_point(cfg)?;
    let mut eta = ctx.start_eta(cfg);
    let mut history: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut t = 0;
    let opt_error = |b: &DVector<f64>| reference.map(|r| (b - r).norm());
    let reason = loop {
        let grad = loss.gradient(&beta)?;
        check_finite(&grad, "gradient", t)?;
        let objective = ctx.objective(&beta)?;
        if !objective.is_finite() {
            return Err(Error::NonFinite(format!("objective at iteration {t}")));
        }
        history.push(objective);
        observer(t, &beta);
        if t >= cfg.max_iters {
            let residual = ctx.residual(&beta, &grad, eta)?;
            trace.push(TraceRow {
                iter: t,
                objective,
                opt_error: opt_error(&beta),
                stat_error: residual,
                eta,
                projected_flag: flag,
            });
            break StopReason::MaxIters;
        }
        let (next, next_eta, next_flag) = ctx.step(&beta, &grad, eta, cfg.backtracking)?;
        let residual = if ctx.on_boundary(&beta) {
            next_eta * (&beta - &next).norm()
        } else {
            ctx.interior_residual(&beta, &grad)
        };
        trace.push(TraceRow {
            iter: t,
            objective,
            opt_error: opt_error(&beta),
            stat_error: residual,
            eta,
            projected_flag: flag,
        });
        if residual < cfg.tol_stat {
            break StopReason::Stationary;
        }
        if t >= OBJECTIVE_WINDOW {
            let old = history[t - OBJECTIVE_WINDOW];
            if (old - objective).abs() <= cfg.tol_obj * objective.abs().max(1.0) {
                break StopReason::ObjectivePlateau;
            }
        }
        beta = next;
        eta = next_eta;
        flag = next_flag;
        t += 1;
    };
    let last = trace.last().expect("trace has at least one row");
    let point = StationaryPoint {
        beta: beta.as_slice().to_vec(),
        residual: last.stat_error,
        objective: last.objective,
        iterations: t,
        converged: reason != StopReason::MaxIters,
        stop_reason: reason,
        eta,
    };
    log::debug!(
        "{} + {}: stopped after {t} iterations ({reason:?}), residual {:e}",
        loss.kind_name(),
        penalty.kind().name(),
        point.residual
    );
    let state = SolverState {
        objective: point.objective,
        beta_t: beta,
        t,
        eta,
        flag,
        trace,
    };
    Ok(Solution { point, state })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Writes the trace as CSV with columns
/// `iter,objective,opt_error,stat_error,eta,projected_flag`.
pub fn write_trace<W: Write>(w: W, rows: &[TraceRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iter", "objective", "opt_error", "stat_error", "eta", "projected_flag"])?;
    for r in rows {
        wr.write_record([
            r.iter.to_string(),
            r.objective.to_string(),
            fmt_opt(r.opt_error),
            r.stat_error.to_string(),
            r.eta.to_string(),
            r.projected_flag.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionInputs {
    pub alpha: f64,
    pub mu: f64,
    pub eta: f64,
    pub tau: f64,
    pub k: usize,
    pub n: usize,
    pub p: usize,
    pub delta: f64,
    /// `φ(β⁰) − φ(β̂)`.
    pub objective_gap: f64,
    pub lambda: f64,
    pub radius: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub kappa: f64,
    pub varphi: f64,
    pub in_range: bool,
    /// Iteration count guaranteeing `δ`-accuracy; `None` when `κ ∉ (0, 1)`.
    pub t_star: Option<u64>,
}

/// The contraction factor
/// `κ = (1 − (2α − μ)/(8η) + φ)/(1 − φ)` with
/// `φ = cτk(log p/n)/(2α − μ)`, and the iteration bound
/// `T*(δ) = 2 log(gap/δ²)/log(1/κ) + (1 + log 2/log(1/κ)) log log(λRL/δ²)`.
/// Negative logarithms are clamped to zero. Diagnostic only: `c = 1`.
pub fn contraction_estimate(x: &ContractionInputs) -> Result<ContractionEstimate> {
    let curv = 2.0 * x.alpha - x.mu;
    if curv <= 0.0 || !curv.is_finite() {
        return Err(Error::Domain(format!(
            "contraction needs 2·alpha > mu, got alpha = {}, mu = {}",
            x.alpha, x.mu
        )));
    }
    if !(x.eta > 0.0 && x.n > 0 && x.p > 0) {
        return Err(Error::Domain("contraction needs eta > 0, n > 0 and p > 0".into()));
    }
    let varphi = CONTRACTION_CONSTANT * x.tau * x.k as f64 * (x.p as f64).ln() / x.n as f64 / curv;
    let kappa = (1.0 - curv / (8.0 * x.eta) + varphi) / (1.0 - varphi);
    let in_range = kappa > 0.0 && kappa < 1.0 && varphi < 1.0;
    let t_star = in_range.then(|| {
        let d2 = x.delta * x.delta;
        let inv = (1.0 / kappa).ln();
        let first = (2.0 * (x.objective_gap / d2).ln() / inv).max(0.0);
        let ll = (x.lambda * x.radius * x.lipschitz / d2).ln();
        let second = if ll > 0.0 { (1.0 + 2f64.ln() / inv) * ll.ln().max(0.0) } else { 0.0 };
        (first + second).ceil() as u64
    });
    Ok(ContractionEstimate {
        kappa,
        varphi,
        in_range,
        t_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RscProbeOptions {
    /// Samples per regime.
    pub n_pairs: usize,
    pub seed: u64,
    /// Sparsity used for the cone weighting; at least 1.
    pub k: usize,
    pub n: usize,
    /// Shifted power iterations for the refined directions.
    pub refine_iters: usize,
}

impl RscProbeOptions {
    pub fn new(n_pairs: usize, seed: u64, k: usize, n: usize) -> Self {
        RscProbeOptions {
            n_pairs,
            seed,
            k,
            n,
            refine_iters: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RscFit {
    pub alpha1: f64,
    pub tau1: f64,
    pub alpha2: f64,
    pub tau2: f64,
    /// Smallest raw `E(Δ)/‖Δ‖₂²` seen in the local regime.
    pub min_raw_curvature: f64,
    pub negative_samples: usize,
    pub samples: usize,
}

struct Sample {
    a: f64,
    b: f64,
    e: f64,
}

/// Maximizes `α*(τ) − Cτ` over `τ ≥ 0`, where `α*(τ) = min_i (e_i + τ b_i)/a_i`
/// is the largest `α` for which `α a_i − τ b_i ≤ e_i` holds on every sample.
/// The objective is concave and piecewise linear, so the maximum sits at
/// `τ = 0` or at an intersection of two lines. Ties go to the smaller `τ`.
fn fit_two_constants(samples: &[Sample], c: f64) -> Result<(f64, f64)> {
    let lines: Vec<(f64, f64)> = samples.iter().map(|s| (s.e / s.a, s.b / s.a)).collect();
    let alpha_at = |tau: f64| lines.iter().map(|&(u, w)| u + tau * w).fold(f64::INFINITY, f64::min);
    let min_slope = lines.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);
    if min_slope > c {
        return Err(Error::DegenerateProbe("fit is unbounded: no sampled direction is sparse enough".into()));
    }
    let mut candidates = vec![0.0];
    for i in 0..lines.len() {
        for j in (i + 1)..lines.len() {
            let (ui, wi) = lines[i];
            let (uj, wj) = lines[j];
            if wi != wj {
                let tau = (uj - ui) / (wi - wj);
                if tau > 0.0 && tau.is_finite() {
                    candidates.push(tau);
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.total_cmp(b));
    candidates.dedup();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for tau in candidates {
        let alpha = alpha_at(tau);
        let score = alpha - c * tau;
        if score > best.0 + 1e-14 * score.abs().max(1.0) {
            best = (score, alpha, tau);
        }
    }
    Ok((best.1, best.2))
}

fn random_direction(rng: &mut rand_chacha::ChaCha8Rng, dim: usize, support: usize, side: Option<usize>) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    for j in rand::seq::index::sample(rng, dim, support.min(dim)).into_iter() {
        v[j] = rng.sample::<f64, _>(StandardNormal);
    }
    if let Some(p) = side {
        v = flatten(&symmetrize(&as_matrix(&v, p)));
    }
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

/// Samples `Δ` in two regimes (`‖Δ‖₂ ≤ 1` and `1 ≤ ‖Δ‖₂ ≤ 3`), computes
/// `E(Δ) = ⟨∇L(β* + Δ) − ∇L(β*), Δ⟩`, and fits
/// `E ≥ α₁‖Δ‖₂² − τ₁(log p/n)‖Δ‖₁²` and `E ≥ α₂‖Δ‖₂ − τ₂√(log p/n)‖Δ‖₁`.
///
/// The trade-off between `α` and `τ` is resolved by maximizing the cone
/// curvature `α − Cτ` with `C = 16k log p/n` (local regime) and
/// `C = 4√k √(log p/n)` (far regime), the values `‖Δ‖₁ ≤ 4√k‖Δ‖₂` gives.
/// Directions are random sparse, random dense, and low-curvature directions
/// refined by shifted power iteration on gradient differences.
pub fn rsc_probe(loss: &Loss, beta_star: &DVector<f64>, opts: &RscProbeOptions) -> Result<RscFit> {
    let dim = loss.dim();
    if beta_star.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "beta_star has length {} but the loss expects {dim}",
            beta_star.len()
        )));
    }
    if opts.n_pairs == 0 || opts.n == 0 {
        return Err(Error::InvalidParameter("rsc probe needs n_pairs > 0 and n > 0".into()));
    }
    let side = loss.matrix_side();
    let p = loss.p() as f64;
    let k = opts.k.max(1);
    let rate = p.ln() / opts.n as f64;
    let g0 = loss.gradient(beta_star)?;
    let mut rng = rng_for(opts.seed);

    let curvature = |delta: &DVector<f64>| -> Option<f64> {
        let g = loss.gradient(&(beta_star + delta)).ok()?;
        let e = (g - &g0).dot(delta);
        e.is_finite().then_some(e)
    };
    let hess = |v: &DVector<f64>| -> Option<DVector<f64>> {
        let eps = 1e-4;
        let g = loss.gradient(&(beta_star + v * eps)).ok()?;
        Some((g - &g0) / eps)
    };
    let restrict = |v: &DVector<f64>, mask: &[bool]| DVector::from_fn(v.len(), |i, _| if mask[i] { v[i] } else { 0.0 });
    let refine = |start: DVector<f64>, mask: &[bool]| -> Option<DVector<f64>> {
        let mut v = start;
        let mut top = 0.0f64;
        let mut u = v.clone();
        for _ in 0..20 {
            let hu = restrict(&hess(&u)?, mask);
            top = top.max(hu.norm());
            let n = hu.norm();
            if n == 0.0 {
                break;
            }
            u = hu / n;
        }
        let shift = 1.1 * top + 1e-12;
        for _ in 0..opts.refine_iters {
            let w = &v * shift - restrict(&hess(&v)?, mask);
            let w = match side {
                Some(s) => flatten(&symmetrize(&as_matrix(&w, s))),
                None => w,
            };
            let n = w.norm();
            if n == 0.0 {
                break;
            }
            v = w / n;
        }
        Some(v)
    };

    let mut local = Vec::new();
    let mut far = Vec::new();
    let mut negatives = 0;
    let mut min_raw = f64::INFINITY;
    let max_support = (2 * k).min(dim).max(1);
    for regime in 0..2 {
        for i in 0..opts.n_pairs {
            let kind = i % 3;
            let support = if kind == 1 { dim } else { rng.random_range(1..=max_support) };
            let mut dir = random_direction(&mut rng, dim, support, side);
            if kind == 2 {
                let mask: Vec<bool> = if i % 2 == 0 {
                    dir.iter().map(|x| *x != 0.0).collect()
                } else {
                    vec![true; dim]
                };
                let start = if i % 2 == 0 { dir.clone() } else { random_direction(&mut rng, dim, dim, side) };
                match refine(start, &mask) {
                    Some(v) if v.norm() > 0.0 => dir = v,
                    _ => {}
                }
            }
            if dir.norm() == 0.0 {
                continue;
            }
            let r: f64 = if regime == 0 { rng.random_range(0.05..=1.0) } else { rng.random_range(1.0..=3.0) };
            let delta = dir * r;
            let Some(e) = curvature(&delta) else { continue };
            let l2 = delta.norm();
            let l1 = delta.lp_norm(1);
            if regime == 0 {
                min_raw = min_raw.min(e / (l2 * l2));
                if e < 0.0 {
                    negatives += 1;
                }
                local.push(Sample {
                    a: l2 * l2,
                    b: rate * l1 * l1,
                    e,
                });
            } else {
                far.push(Sample {
                    a: l2,
                    b: rate.sqrt() * l1,
                    e,
                });
            }
        }
    }
    if local.iter().chain(far.iter()).all(|s| s.e <= 0.0) {
        return Err(Error::DegenerateProbe("every sampled curvature E(Δ) is nonpositive".into()));
    }
    if local.is_empty() || far.is_empty() {
        return Err(Error::DegenerateProbe("no admissible directions were sampled".into()));
    }
    let (alpha1, tau1) = fit_two_constants(&local, 16.0 * k as f64 * rate)?;
    let (alpha2, tau2) = fit_two_constants(&far, 4.0 * (k as f64).sqrt() * rate.sqrt())?;
    Ok(RscFit {
        alpha1,
        tau1,
        alpha2,
        tau2,
        min_raw_curvature: min_raw,
        negative_samples: negatives,
        samples: local.len() + far.len(),
    })
}
