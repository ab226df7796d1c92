//! Brute-force verification of the closed-form proximal maps and of the
//! regularity conditions every penalty must satisfy.
//!
//! Nothing here calls the closed-form prox; the oracle only evaluates the
//! scalar objective `½(x − z)² + ν ρ_λ(x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::penalty::{Penalty, PenaltyKind};

/// Grid spacing of the brute-force prox oracle.
pub const ORACLE_GRID_STEP: f64 = 1e-4;
/// Allowed gap between closed-form and oracle objective values.
pub const PROX_OBJECTIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    L1,
    Scad,
    Mcp,
    CappedL1,
}

impl PenaltyFamily {
    pub const ALL: [PenaltyFamily; 4] = [
        PenaltyFamily::L1,
        PenaltyFamily::Scad,
        PenaltyFamily::Mcp,
        PenaltyFamily::CappedL1,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "lasso" => Some(PenaltyFamily::L1),
            "scad" => Some(PenaltyFamily::Scad),
            "mcp" => Some(PenaltyFamily::Mcp),
            "capped" | "capped_l1" | "capped-l1" => Some(PenaltyFamily::CappedL1),
            _ => None,
        }
    }

    pub fn of(p: &Penalty) -> Self {
        match p.kind() {
            PenaltyKind::L1 => PenaltyFamily::L1,
            PenaltyKind::Scad { .. } => PenaltyFamily::Scad,
            PenaltyKind::Mcp { .. } => PenaltyFamily::Mcp,
            PenaltyKind::CappedL1 { .. } => PenaltyFamily::CappedL1,
        }
    }
}

/// Minimizes a scalar function over `[−|z|−1, |z|+1]`: dense grid with
/// spacing [`ORACLE_GRID_STEP`], then golden-section refinement of the
/// best cell. Returns `(argmin, min)`.
pub fn brute_force_scalar_min(f: impl Fn(f64) -> f64, z: f64) -> (f64, f64) {
    let h = ORACLE_GRID_STEP;
    let n = ((z.abs() + 1.0) / h).ceil() as i64;
    let mut best_x = 0.0;
    let mut best_f = f(0.0);
    for i in -n..=n {
        let x = i as f64 * h;
        let fx = f(x);
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
    }
    let (rx, rf) = golden_section(&f, best_x - h, best_x + h, 1e-13);
    if rf < best_f {
        (rx, rf)
    } else {
        (best_x, best_f)
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)]
        .into_iter()
        .fold((x, fx), |acc, cand| if cand.1 < acc.1 { cand } else { acc })
}

/// One random prox instance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProxInstance {
    pub penalty: Penalty,
    pub z: f64,
    pub nu: f64,
}

impl ProxInstance {
    pub fn objective(&self, x: f64) -> f64 {
        0.5 * (x - self.z).powi(2) + self.nu * self.penalty.value(x)
    }
}

/// Draws `count` instances with `λ ∈ [0.1, 2]`, `z ∈ [−10, 10]` and
/// `ν ∈ [0.1, min(1, a−1, b) − 0.05]`.
pub fn sample_instances(family: PenaltyFamily, count: usize, seed: u64) -> Vec<ProxInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let lambda = rng.random_range(0.1..=2.0);
            let (penalty, cap) = match family {
                PenaltyFamily::L1 => (Penalty::l1(lambda), 1.0),
                PenaltyFamily::Scad => {
                    let a: f64 = rng.random_range(2.1..=6.0);
                    (Penalty::scad(lambda, a), 1.0f64.min(a - 1.0))
                }
                PenaltyFamily::Mcp => {
                    let b: f64 = rng.random_range(0.5..=6.0);
                    (Penalty::mcp(lambda, b), 1.0f64.min(b))
                }
                PenaltyFamily::CappedL1 => (Penalty::capped_l1(lambda, rng.random_range(1.0..=4.0)), 1.0),
            };
            let nu = rng.random_range(0.1..=(cap - 0.05));
            let z = rng.random_range(-10.0..=10.0);
            ProxInstance {
                penalty: penalty.expect("sampled parameters are valid"),
                z,
                nu,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProxDeviation {
    pub instance: ProxInstance,
    pub closed_form: f64,
    pub oracle: f64,
    pub closed_form_objective: f64,
    pub oracle_objective: f64,
}

impl ProxDeviation {
    pub fn gap(&self) -> f64 {
        (self.closed_form_objective - self.oracle_objective).abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProxCheckResult {
    pub family: PenaltyFamily,
    pub instances: usize,
    pub max_objective_gap: f64,
    pub worst: Option<ProxDeviation>,
    pub passed: bool,
}

/// Compares `prox` against the brute-force oracle on `count` random
/// instances of each family. `prox(penalty, z, ν)` is injectable so the
/// harness itself can be mutation-tested.
pub fn run_prox_check<F>(families: &[PenaltyFamily], count: usize, seed: u64, prox: F) -> Vec<ProxCheckResult>
where
    F: Fn(&Penalty, f64, f64) -> f64 + Sync,
{
    families
        .iter()
        .enumerate()
        .map(|(i, &family)| {
            let instances = sample_instances(family, count, seed.wrapping_add(i as u64 * 7919));
            let worst = instances
                .par_iter()
                .map(|inst| {
                    let x = prox(&inst.penalty, inst.z, inst.nu);
                    let (ox, of) = brute_force_scalar_min(|t| inst.objective(t), inst.z);
                    ProxDeviation {
                        instance: *inst,
                        closed_form: x,
                        oracle: ox,
                        closed_form_objective: inst.objective(x),
                        oracle_objective: of,
                    }
                })
                .reduce_with(|a, b| if b.gap() > a.gap() { b } else { a });
            let max_gap = worst.as_ref().map_or(0.0, |w| w.gap());
            ProxCheckResult {
                family,
                instances: count,
                max_objective_gap: max_gap,
                passed: max_gap.is_finite() && max_gap <= PROX_OBJECTIVE_TOL,
                worst,
            }
        })
        .collect()
}

/// The library's closed-form prox, in the shape [`run_prox_check`] expects.
pub fn closed_form_prox(p: &Penalty, z: f64, nu: f64) -> f64 {
    p.prox(z, nu).unwrap_or(f64::NAN)
}

/// Outcome of the regularity checks on one penalty.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub penalty: Penalty,
    pub symmetric: bool,
    pub zero_at_origin: bool,
    pub nondecreasing: bool,
    pub ratio_nonincreasing: bool,
    pub lipschitz: bool,
    pub midpoint_convex: bool,
    pub l1_lower_bound: bool,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.symmetric
            && self.zero_at_origin
            && self.nondecreasing
            && self.ratio_nonincreasing
            && self.lipschitz
            && self.midpoint_convex
            && self.l1_lower_bound
    }
}

/// Checks symmetry, monotonicity, `ρ(t)/t` nonincreasing, `λL`-Lipschitz
/// continuity and midpoint convexity of `ρ + μt²/2` on `grid_points`-point
/// grids, plus `λL‖β‖₁ ≤ ρ(β) + μ‖β‖²/2` on `vectors` random vectors.
pub fn penalty_property_suite(p: &Penalty, grid_points: usize, vectors: usize, seed: u64) -> PropertyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lam = p.lambda();
    let ll = lam * p.lipschitz();
    let span = match p.kind() {
        PenaltyKind::L1 => 5.0 * lam,
        PenaltyKind::Scad { a } => (a + 2.0) * lam,
        PenaltyKind::Mcp { b } => (b + 2.0) * lam,
        PenaltyKind::CappedL1 { c } => (c + 2.0) * lam,
    };
    let slack = 1e-12 * (1.0 + span * lam);

    let symmetric = (0..grid_points).all(|_| {
        let t: f64 = rng.random_range(-3.0 * span..3.0 * span);
        p.value(t) == p.value(-t)
    });
    let zero_at_origin = p.value(0.0) == 0.0;

    let grid: Vec<f64> = (1..=grid_points)
        .map(|i| span * i as f64 / grid_points as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&t| p.value(t)).collect();
    let nondecreasing = p.value(0.0) <= vals[0] && vals.windows(2).all(|w| w[1] >= w[0] - slack);
    let ratio_nonincreasing = grid
        .windows(2)
        .zip(vals.windows(2))
        .all(|(t, v)| v[1] / t[1] <= v[0] / t[0] + 1e-12);

    let mut lipschitz = grid
        .windows(2)
        .zip(vals.windows(2))
        .all(|(t, v)| (v[1] - v[0]).abs() <= ll * (t[1] - t[0]) + slack);
    for _ in 0..grid_points {
        let t1: f64 = rng.random_range(-span..span);
        let t2: f64 = rng.random_range(-span..span);
        lipschitz &= (p.value(t2) - p.value(t1)).abs() <= ll * (t2 - t1).abs() + slack;
    }

    let (midpoint_convex, l1_lower_bound) = match p.weak_convexity() {
        Some(mu) => {
            let f = |t: f64| p.value(t) + 0.5 * mu * t * t;
            let sym: Vec<f64> = (0..grid_points)
                .map(|i| -span + 2.0 * span * i as f64 / (grid_points - 1) as f64)
                .collect();
            let mut convex = sym
                .windows(3)
                .all(|w| f(w[1]) <= 0.5 * (f(w[0]) + f(w[2])) + slack);
            for _ in 0..grid_points {
                let x: f64 = rng.random_range(-span..span);
                let y: f64 = rng.random_range(-span..span);
                convex &= f(0.5 * (x + y)) <= 0.5 * (f(x) + f(y)) + slack;
            }
            let bound = (0..vectors).all(|_| {
                let dim = rng.random_range(1..=32);
                let beta: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0 * span..2.0 * span)).collect();
                let l1: f64 = beta.iter().map(|b| b.abs()).sum();
                let sq: f64 = beta.iter().map(|b| b * b).sum();
                ll * l1 <= p.total(&beta) + 0.5 * mu * sq + 1e-9 * (1.0 + ll * l1)
            });
            (convex, bound)
        }
        // capped-ℓ1 has no convexifying curvature; these two are vacuous
        None => (true, true),
    };

    PropertyReport {
        penalty: *p,
        symmetric,
        zero_at_origin,
        nondecreasing,
        ratio_nonincreasing,
        lipschitz,
        midpoint_convex,
        l1_lower_bound,
    }
}
