//! Separable penalties: L1, SCAD, MCP and capped-ℓ1.
//!
//! Every penalty is a function `ρ_λ: ℝ → ℝ` applied coordinatewise. For the
//! three weakly convex kinds the curvature constant `μ` makes
//! `ρ_λ(t) + μt²/2` convex, which is what the composite solver relies on.
//! Capped-ℓ1 has no such constant; it instead carries the majorant
//! parameters `(μ₁, μ₂) = (0, 1/c)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyKind {
    L1,
    Scad { a: f64 },
    Mcp { b: f64 },
    CappedL1 { c: f64 },
}

impl PenaltyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PenaltyKind::L1 => "l1",
            PenaltyKind::Scad { .. } => "scad",
            PenaltyKind::Mcp { .. } => "mcp",
            PenaltyKind::CappedL1 { .. } => "capped_l1",
        }
    }
}

/// A validated penalty `ρ_λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UncheckedPenalty", into = "UncheckedPenalty")]
pub struct Penalty {
    lambda: f64,
    kind: PenaltyKind,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct UncheckedPenalty {
    lambda: f64,
    #[serde(flatten)]
    kind: PenaltyKind,
}

impl TryFrom<UncheckedPenalty> for Penalty {
    type Error = Error;

    fn try_from(raw: UncheckedPenalty) -> Result<Self> {
        Penalty::new(raw.lambda, raw.kind)
    }
}

impl From<Penalty> for UncheckedPenalty {
    fn from(p: Penalty) -> Self {
        UncheckedPenalty {
            lambda: p.lambda,
            kind: p.kind,
        }
    }
}

/// Input of the vector proximal map: the point `z`, the effective weight
/// `ν = (1/η)/(1 + μ/η)` and the pre-scaling `1/(1 + μ/η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxRequest {
    pub z: Vec<f64>,
    pub nu: f64,
    pub shrink: f64,
}

impl ProxRequest {
    /// Builds the request for one composite gradient step with inverse
    /// stepsize `eta` and curvature `mu`.
    pub fn for_step(z: Vec<f64>, eta: f64, mu: f64) -> Self {
        let shrink = 1.0 / (1.0 + mu / eta);
        ProxRequest {
            z,
            nu: shrink / eta,
            shrink,
        }
    }
}

#[inline]
pub(crate) fn sgn(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Penalty {
    pub fn new(lambda: f64, kind: PenaltyKind) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        match kind {
            PenaltyKind::L1 => {}
            PenaltyKind::Scad { a } => {
                if !(a.is_finite() && a > 2.0) {
                    return Err(Error::InvalidParameter(format!(
                        "SCAD requires a > 2, got {a}"
                    )));
                }
            }
            PenaltyKind::Mcp { b } => {
                if !(b.is_finite() && b > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "MCP requires b > 0, got {b}"
                    )));
                }
            }
            PenaltyKind::CappedL1 { c } => {
                if !(c.is_finite() && c >= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "capped-l1 requires c >= 1, got {c}"
                    )));
                }
            }
        }
        Ok(Penalty { lambda, kind })
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        Self::new(lambda, PenaltyKind::L1)
    }

    pub fn scad(lambda: f64, a: f64) -> Result<Self> {
        Self::new(lambda, PenaltyKind::Scad { a })
    }

    pub fn mcp(lambda: f64, b: f64) -> Result<Self> {
        Self::new(lambda, PenaltyKind::Mcp { b })
    }

    pub fn capped_l1(lambda: f64, c: f64) -> Result<Self> {
        Self::new(lambda, PenaltyKind::CappedL1 { c })
    }

    /// Same kind and shape parameter, different `λ`.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.kind)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    /// The constant `L` with `lim_{t→0⁺} ρ'_λ(t) = λL`. It is 1 for every kind.
    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    /// Weak-convexity constant `μ`; `None` for capped-ℓ1.
    pub fn weak_convexity(&self) -> Option<f64> {
        match self.kind {
            PenaltyKind::L1 => Some(0.0),
            PenaltyKind::Scad { a } => Some(1.0 / (a - 1.0)),
            PenaltyKind::Mcp { b } => Some(1.0 / b),
            PenaltyKind::CappedL1 { .. } => None,
        }
    }

    /// Majorant constants `(μ₁, μ₂)` for capped-ℓ1.
    pub fn majorant_constants(&self) -> Option<(f64, f64)> {
        match self.kind {
            PenaltyKind::CappedL1 { c } => Some((0.0, 1.0 / c)),
            _ => None,
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(self.kind, PenaltyKind::L1)
    }

    /// `ρ_λ(t)`.
    pub fn value(&self, t: f64) -> f64 {
        let lam = self.lambda;
        let at = t.abs();
        match self.kind {
            PenaltyKind::L1 => lam * at,
            PenaltyKind::Scad { a } => {
                if at <= lam {
                    lam * at
                } else if at <= a * lam {
                    -(at * at - 2.0 * a * lam * at + lam * lam) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * lam * lam / 2.0
                }
            }
            PenaltyKind::Mcp { b } => {
                if at <= b * lam {
                    lam * at - at * at / (2.0 * b)
                } else {
                    b * lam * lam / 2.0
                }
            }
            PenaltyKind::CappedL1 { c } => (lam * lam * c / 2.0).min(lam * at),
        }
    }

    /// `Σ_j ρ_λ(β_j)`.
    pub fn total(&self, beta: &[f64]) -> f64 {
        beta.iter().map(|&t| self.value(t)).sum()
    }

    /// `ρ'_λ(t)` for `t ≠ 0`. At zero use [`Penalty::subgradient_at_zero`].
    pub fn derivative(&self, t: f64) -> Result<f64> {
        if t == 0.0 || !t.is_finite() {
            return Err(Error::NotDifferentiable(t));
        }
        let lam = self.lambda;
        let at = t.abs();
        let s = sgn(t);
        let d = match self.kind {
            PenaltyKind::L1 => lam,
            PenaltyKind::Scad { a } => {
                if at <= lam {
                    lam
                } else {
                    (a * lam - at).max(0.0) / (a - 1.0)
                }
            }
            PenaltyKind::Mcp { b } => lam * (1.0 - at / (lam * b)).max(0.0),
            PenaltyKind::CappedL1 { c } => {
                let kink = lam * c / 2.0;
                if at == kink {
                    return Err(Error::NotDifferentiable(t));
                } else if at < kink {
                    lam
                } else {
                    0.0
                }
            }
        };
        Ok(s * d)
    }

    /// The subdifferential at zero, `[−λL, λL]`.
    pub fn subgradient_at_zero(&self) -> (f64, f64) {
        let m = self.lambda * self.lipschitz();
        (-m, m)
    }

    /// Largest `ν` for which the closed-form scalar prox is valid (the
    /// scalar objective stays strongly convex). Infinite for L1 and capped-ℓ1.
    pub fn max_prox_weight(&self) -> f64 {
        match self.kind {
            PenaltyKind::Scad { a } => a - 1.0,
            PenaltyKind::Mcp { b } => b,
            PenaltyKind::L1 | PenaltyKind::CappedL1 { .. } => f64::INFINITY,
        }
    }

    /// `argmin_x ½(x − z)² + ν ρ_λ(x)`.
    pub fn prox(&self, z: f64, nu: f64) -> Result<f64> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox weight must be positive, got {nu}"
            )));
        }
        if nu >= self.max_prox_weight() {
            return Err(Error::InvalidParameter(format!(
                "prox weight {nu} outside the closed-form range (< {}) for {}",
                self.max_prox_weight(),
                self.kind.name()
            )));
        }
        Ok(self.prox_unchecked(z, nu))
    }

    pub(crate) fn prox_unchecked(&self, z: f64, nu: f64) -> f64 {
        let lam = self.lambda;
        let az = z.abs();
        let s = sgn(z);
        match self.kind {
            PenaltyKind::L1 => s * (az - nu * lam).max(0.0),
            PenaltyKind::Scad { a } => {
                if az <= nu * lam {
                    0.0
                } else if az <= (nu + 1.0) * lam {
                    z - s * nu * lam
                } else if az <= a * lam {
                    (z - s * a * nu * lam / (a - 1.0)) / (1.0 - nu / (a - 1.0))
                } else {
                    z
                }
            }
            PenaltyKind::Mcp { b } => {
                if az <= nu * lam {
                    0.0
                } else if az <= b * lam {
                    (z - s * nu * lam) / (1.0 - nu / b)
                } else {
                    z
                }
            }
            PenaltyKind::CappedL1 { c } => capped_prox(lam, c, z, nu, 0.0),
        }
    }

    /// Componentwise prox of `shrink · z` with weight `ν`.
    pub fn prox_vector(&self, req: &ProxRequest) -> Result<Vec<f64>> {
        if !(req.shrink > 0.0 && req.shrink <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "shrink must lie in (0, 1], got {}",
                req.shrink
            )));
        }
        // validate once, then run the unchecked scalar map
        self.prox(0.0, req.nu)?;
        Ok(req
            .z
            .iter()
            .map(|&zj| self.prox_unchecked(req.shrink * zj, req.nu))
            .collect())
    }

    /// The convex side function `g_{λ,μ}(β) = (ρ_λ(β) + μ‖β‖²/2)/λ`.
    ///
    /// Capped-ℓ1 has no finite `μ` and is rejected.
    pub fn side_function(&self, beta: &[f64]) -> Result<f64> {
        let mu = self
            .weak_convexity()
            .ok_or(Error::UnsupportedPenalty("capped-l1"))?;
        Ok(self.side_function_with(beta, mu))
    }

    pub(crate) fn side_function_with(&self, beta: &[f64], mu: f64) -> f64 {
        let sq: f64 = beta.iter().map(|b| b * b).sum();
        (self.total(beta) + 0.5 * mu * sq) / self.lambda
    }

    /// The convex majorant of capped-ℓ1 anchored at `beta_tilde`.
    pub fn capped_l1_majorant(&self, beta_tilde: &[f64]) -> Result<CappedL1Majorant> {
        match self.kind {
            PenaltyKind::CappedL1 { c } => Ok(CappedL1Majorant::new(self.lambda, c, beta_tilde)),
            _ => Err(Error::InvalidParameter(format!(
                "majorant is only defined for capped-l1, got {}",
                self.kind.name()
            ))),
        }
    }
}

/// `argmin_x ½(x − z)² + ν·min(λ²c/2, λ|x|) + extra·|x|`.
///
/// The objective is convex on each of the two regions `|x| ≤ λc/2` and
/// `|x| ≥ λc/2`; the region minimizers are compared and ties go to the
/// smaller magnitude.
pub(crate) fn capped_prox(lam: f64, c: f64, z: f64, nu: f64, extra: f64) -> f64 {
    let kink = lam * c / 2.0;
    let cap = lam * lam * c / 2.0;
    let az = z.abs();
    let s = sgn(z);
    let inner = (az - nu * lam - extra).max(0.0).min(kink);
    let outer = (az - extra).max(kink);
    let obj = |m: f64| 0.5 * (m - az).powi(2) + nu * (lam * m).min(cap) + extra * m;
    let (fi, fo) = (obj(inner), obj(outer));
    if fi <= fo {
        s * inner
    } else {
        s * outer
    }
}

/// Convex upper bound of capped-ℓ1 built around an anchor `β̃`:
/// coordinate `j` uses `λ|t|` if `|β̃_j| ≤ λc/2`, and the constant cap
/// `λ²c/2` otherwise. It agrees with `ρ_λ` at the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct CappedL1Majorant {
    lambda: f64,
    c: f64,
    linear: Vec<bool>,
}

impl CappedL1Majorant {
    fn new(lambda: f64, c: f64, beta_tilde: &[f64]) -> Self {
        let kink = lambda * c / 2.0;
        CappedL1Majorant {
            lambda,
            c,
            linear: beta_tilde.iter().map(|b| b.abs() <= kink).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// Whether coordinate `j` uses the linear branch.
    pub fn is_linear(&self, j: usize) -> bool {
        self.linear[j]
    }

    pub fn value_at(&self, j: usize, t: f64) -> f64 {
        if self.linear[j] {
            self.lambda * t.abs()
        } else {
            self.lambda * self.lambda * self.c / 2.0
        }
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        beta.iter()
            .enumerate()
            .map(|(j, &t)| self.value_at(j, t))
            .sum()
    }

    /// Subdifferential interval of the majorant at coordinate `j`.
    pub fn subdifferential(&self, j: usize, t: f64) -> (f64, f64) {
        if !self.linear[j] {
            (0.0, 0.0)
        } else if t == 0.0 {
            (-self.lambda, self.lambda)
        } else {
            let d = sgn(t) * self.lambda;
            (d, d)
        }
    }
}

/// Subdifferential interval of `ρ_λ` at `t`, with the capped-ℓ1 kink
/// treated through the majorant convention (linear branch).
pub(crate) fn subdifferential(p: &Penalty, t: f64) -> (f64, f64) {
    if t == 0.0 {
        return p.subgradient_at_zero();
    }
    match p.derivative(t) {
        Ok(d) => (d, d),
        Err(_) => {
            let d = sgn(t) * p.lambda();
            (d, d)
        }
    }
}
