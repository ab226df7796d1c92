//! Seeded synthetic data: sparse targets, Gaussian designs, corruption,
//! responses and sparse Gaussian graphical models.
//!
//! Every generator is a pure function of its spec and seed. The generator is
//! ChaCha8 (`rand_chacha` 0.9) with `rand_distr` 0.5 standard normals, so a
//! seed replays bit-identically on every platform.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child seed for trial `index` under `master` (splitmix64 finalizer).
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `⌊√p⌋`, at least 1.
pub fn default_k(p: usize) -> usize {
    ((p as f64).sqrt().floor() as usize).max(1)
}

/// `λ = √(log p / n)`.
pub fn default_lambda(p: usize, n: usize) -> f64 {
    ((p as f64).ln() / n as f64).sqrt()
}

/// `⌊c · k · log p⌋`.
pub fn rescaled_sample_size(c: f64, k: usize, p: usize) -> usize {
    (c * k as f64 * (p as f64).ln()).floor() as usize
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Covariance {
    #[default]
    Identity,
    /// `Σ_ij = ζ^{|i−j|}`.
    Toeplitz { zeta: f64 },
}

impl Covariance {
    pub fn matrix(&self, p: usize) -> DMatrix<f64> {
        match *self {
            Covariance::Identity => DMatrix::identity(p, p),
            Covariance::Toeplitz { zeta } => {
                DMatrix::from_fn(p, p, |i, j| zeta.powi((i as i64 - j as i64).unsigned_abs() as i32))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Covariance::Toeplitz { zeta } = *self {
            if !(0.0..1.0).contains(&zeta) {
                return Err(Error::InvalidParameter(format!("Toeplitz zeta must lie in [0, 1), got {zeta}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    pub covariance: Covariance,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub p: usize,
    /// Defaults to `⌊√p⌋`.
    pub k: Option<usize>,
    pub normalize: bool,
    pub seed: u64,
}

impl TargetSpec {
    pub fn new(p: usize, seed: u64) -> Self {
        TargetSpec {
            p,
            k: None,
            normalize: true,
            seed,
        }
    }

    pub fn sparsity(&self) -> usize {
        self.k.unwrap_or_else(|| default_k(self.p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CorruptionMode {
    AdditiveNoise { sigma_w: f64 },
    Missing { vartheta: f64 },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub mode: CorruptionMode,
    /// Standard deviation of the response noise `ε`.
    pub noise_sd: f64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            mode: CorruptionMode::AdditiveNoise { sigma_w: 0.2 },
            noise_sd: 0.1,
        }
    }
}

/// A `k`-sparse target with uniformly random support and standard normal
/// nonzeros, rescaled to unit ℓ₂ norm when `normalize` is set.
pub fn gen_target(spec: &TargetSpec) -> Result<DVector<f64>> {
    let k = spec.sparsity();
    if k > spec.p {
        return Err(Error::InvalidParameter(format!("sparsity {k} exceeds dimension {}", spec.p)));
    }
    let mut rng = rng_for(spec.seed);
    let mut beta = DVector::zeros(spec.p);
    for j in sample(&mut rng, spec.p, k).into_iter() {
        let mut v = normal(&mut rng);
        while v == 0.0 {
            v = normal(&mut rng);
        }
        beta[j] = v;
    }
    if spec.normalize && k > 0 {
        let norm = beta.norm();
        beta /= norm;
    }
    Ok(beta)
}

/// Rows drawn i.i.d. from `N(0, Σ)`.
pub fn gen_design(spec: &DesignSpec) -> Result<DMatrix<f64>> {
    spec.covariance.validate()?;
    let mut rng = rng_for(spec.seed);
    let g = DMatrix::from_fn(spec.n, spec.p, |_, _| normal(&mut rng));
    match spec.covariance {
        Covariance::Identity => Ok(g),
        cov => {
            let l = cov
                .matrix(spec.p)
                .cholesky()
                .ok_or(Error::NotPositiveDefinite)?
                .unpack();
            // x_i = L g_i, so X = G Lᵀ
            Ok(g * l.transpose())
        }
    }
}

/// `y = Xβ* + ε` with `ε ~ N(0, noise_sd²)`.
pub fn gen_linear_response(x: &DMatrix<f64>, beta_star: &DVector<f64>, noise_sd: f64, seed: u64) -> Result<DVector<f64>> {
    check_dims(x, beta_star)?;
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sd must be nonnegative, got {noise_sd}")));
    }
    let mut rng = rng_for(seed);
    let mut y = x * beta_star;
    if noise_sd > 0.0 {
        for yi in y.iter_mut() {
            *yi += noise_sd * normal(&mut rng);
        }
    }
    Ok(y)
}

/// Additive noise `z = x + w` with `w ~ N(0, σ_w² I)`, or independent
/// erasures (marked `NaN`) with probability `ϑ`.
pub fn corrupt(x: &DMatrix<f64>, mode: &CorruptionMode, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = rng_for(seed);
    match *mode {
        CorruptionMode::None => Ok(x.clone()),
        CorruptionMode::AdditiveNoise { sigma_w } => {
            if !(sigma_w >= 0.0 && sigma_w.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma_w must be nonnegative, got {sigma_w}")));
            }
            if sigma_w == 0.0 {
                return Ok(x.clone());
            }
            Ok(x.map(|v| v + sigma_w * normal(&mut rng)))
        }
        CorruptionMode::Missing { vartheta } => {
            if !(0.0..1.0).contains(&vartheta) {
                return Err(Error::InvalidParameter(format!("vartheta must lie in [0, 1), got {vartheta}")));
            }
            Ok(x.map(|v| if rng.random::<f64>() < vartheta { f64::NAN } else { v }))
        }
    }
}

/// `y_i ~ Bernoulli(sigmoid(x_iᵀβ*))`.
pub fn gen_logistic_response(x: &DMatrix<f64>, beta_star: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
    check_dims(x, beta_star)?;
    let mut rng = rng_for(seed);
    let t = x * beta_star;
    Ok(t.map(|ti| {
        let u: f64 = rng.random();
        if u < crate::loss::sigmoid(ti) {
            1.0
        } else {
            0.0
        }
    }))
}

fn check_dims(x: &DMatrix<f64>, beta: &DVector<f64>) -> Result<()> {
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns but target has length {}",
            x.ncols(),
            beta.len()
        )));
    }
    Ok(())
}

/// Noise level giving `SNR = β*ᵀΣ_xβ* / σ_ε²`.
pub fn noise_sd_for_snr(beta_star: &DVector<f64>, sigma_x: &DMatrix<f64>, snr: f64) -> Result<f64> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidParameter(format!("SNR must be positive, got {snr}")));
    }
    let signal = beta_star.dot(&(sigma_x * beta_star));
    Ok((signal / snr).sqrt())
}

/// Realized `SNR = β*ᵀΣ_xβ* / σ_ε²`.
pub fn snr(beta_star: &DVector<f64>, sigma_x: &DMatrix<f64>, noise_sd: f64) -> f64 {
    beta_star.dot(&(sigma_x * beta_star)) / (noise_sd * noise_sd)
}

#[derive(Debug, Clone)]
pub struct SparsePrecision {
    pub theta_star: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub samples: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
}

/// Smallest eigenvalue guaranteed for generated precision matrices.
pub const PRECISION_EIGEN_FLOOR: f64 = 0.1;

/// Sparse precision matrix with `⌊s/2⌋` symmetric off-diagonal pairs of
/// magnitude in `[0.2, 0.5]` and random sign. The diagonal is set to
/// `max(1, Σ_{k≠j}|Θ_jk| + 0.1)`, so Gershgorin gives `λ_min ≥ 0.1`.
/// Returns `Θ*`, `Σ = Θ*⁻¹`, `n` samples from `N(0, Σ)` and `Σ̂ = XᵀX/n`.
pub fn gen_sparse_precision(p: usize, s: usize, n: usize, seed: u64) -> Result<SparsePrecision> {
    if p == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if s > p * (p - 1) {
        return Err(Error::InvalidParameter(format!("s = {s} exceeds p(p-1) = {}", p * (p - 1))));
    }
    let mut rng = rng_for(seed);
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| ((i + 1)..p).map(move |j| (i, j))).collect();
    let mut theta = DMatrix::<f64>::zeros(p, p);
    for idx in sample(&mut rng, pairs.len(), s / 2).into_iter() {
        let (i, j) = pairs[idx];
        let mag = rng.random_range(0.2..=0.5);
        let v = if rng.random_bool(0.5) { mag } else { -mag };
        theta[(i, j)] = v;
        theta[(j, i)] = v;
    }
    for i in 0..p {
        let off: f64 = (0..p).filter(|&j| j != i).map(|j| theta[(i, j)].abs()).sum();
        theta[(i, i)] = (off + PRECISION_EIGEN_FLOOR).max(1.0);
    }
    let sigma = theta
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?
        .inverse();
    let sigma = crate::loss::symmetrize(&sigma);
    let l = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
    let g = DMatrix::from_fn(n, p, |_, _| normal(&mut rng));
    let samples = g * l.transpose();
    let sigma_hat = if n > 0 {
        samples.tr_mul(&samples) / n as f64
    } else {
        DMatrix::zeros(p, p)
    };
    Ok(SparsePrecision {
        theta_star: theta,
        sigma,
        samples,
        sigma_hat,
    })
}
