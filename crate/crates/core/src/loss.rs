//! Empirical losses: corrected linear regression, generalized linear models
//! and the graphical Lasso log-determinant loss.
//!
//! All losses act on a flat parameter vector. For the graphical Lasso the
//! vector holds the `p × p` matrix `Θ` in column-major order, so the same
//! solver and penalty code applies entrywise.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AdditiveNoise,
    MissingData,
    Clean,
}

/// The quadratic surrogate `½ βᵀΓ̂β − γ̂ᵀβ`. `Γ̂` may be indefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedLinearData {
    gamma_hat: DMatrix<f64>,
    gamma_vec: DVector<f64>,
    provenance: Provenance,
    n_samples: Option<usize>,
}

impl CorrectedLinearData {
    pub fn new(gamma_hat: DMatrix<f64>, gamma_vec: DVector<f64>, provenance: Provenance) -> Result<Self> {
        let p = gamma_vec.len();
        if gamma_hat.nrows() != p || gamma_hat.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "Gamma is {}x{} but gamma has length {p}",
                gamma_hat.nrows(),
                gamma_hat.ncols()
            )));
        }
        if gamma_hat.iter().chain(gamma_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("corrected linear data".into()));
        }
        Ok(CorrectedLinearData {
            gamma_hat: symmetrize(&gamma_hat),
            gamma_vec,
            provenance,
            n_samples: None,
        })
    }

    fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = Some(n);
        self
    }

    pub fn gamma_hat(&self) -> &DMatrix<f64> {
        &self.gamma_hat
    }

    pub fn gamma_vec(&self) -> &DVector<f64> {
        &self.gamma_vec
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmFamily {
    Logistic,
    Gaussian,
}

/// Design and response for a canonical-link GLM with unit dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmData {
    x: DMatrix<f64>,
    y: DVector<f64>,
    family: GlmFamily,
}

impl GlmData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, family: GlmFamily) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has length {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::InvalidParameter("GLM needs at least one sample".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GLM data".into()));
        }
        if family == GlmFamily::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidParameter("logistic response must be 0/1".into()));
        }
        Ok(GlmData { x, y, family })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn family(&self) -> GlmFamily {
        self.family
    }
}

/// Sample covariance for the graphical Lasso. Need not be positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GlassoData {
    sigma_hat: DMatrix<f64>,
    n_samples: Option<usize>,
}

impl GlassoData {
    pub fn new(sigma_hat: DMatrix<f64>) -> Result<Self> {
        if !sigma_hat.is_square() || sigma_hat.nrows() == 0 {
            return Err(Error::DimensionMismatch("covariance must be square and non-empty".into()));
        }
        if sigma_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance".into()));
        }
        Ok(GlassoData {
            sigma_hat: symmetrize(&sigma_hat),
            n_samples: None,
        })
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = Some(n);
        self
    }

    pub fn sigma_hat(&self) -> &DMatrix<f64> {
        &self.sigma_hat
    }

    pub fn p(&self) -> usize {
        self.sigma_hat.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    CorrectedLinear(CorrectedLinearData),
    Glm(GlmData),
    Glasso(GlassoData),
}

impl Loss {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Loss::CorrectedLinear(_) => "corrected_linear",
            Loss::Glm(d) => match d.family {
                GlmFamily::Logistic => "logistic",
                GlmFamily::Gaussian => "gaussian_glm",
            },
            Loss::Glasso(_) => "glasso",
        }
    }

    /// Length of the parameter vector.
    pub fn dim(&self) -> usize {
        match self {
            Loss::CorrectedLinear(d) => d.gamma_vec.len(),
            Loss::Glm(d) => d.x.ncols(),
            Loss::Glasso(d) => d.p() * d.p(),
        }
    }

    /// Number of underlying variables: `p` for vector losses, the matrix
    /// side for the graphical Lasso.
    pub fn p(&self) -> usize {
        match self {
            Loss::Glasso(d) => d.p(),
            _ => self.dim(),
        }
    }

    pub fn n_samples(&self) -> Option<usize> {
        match self {
            Loss::CorrectedLinear(d) => d.n_samples,
            Loss::Glm(d) => Some(d.x.nrows()),
            Loss::Glasso(d) => d.n_samples,
        }
    }

    /// Matrix side length when the parameter is a symmetric matrix.
    pub fn matrix_side(&self) -> Option<usize> {
        match self {
            Loss::Glasso(d) => Some(d.p()),
            _ => None,
        }
    }

    pub fn is_convex(&self) -> bool {
        match self {
            Loss::CorrectedLinear(d) => d.provenance == Provenance::Clean,
            Loss::Glm(_) | Loss::Glasso(_) => true,
        }
    }

    fn check_dim(&self, beta: &DVector<f64>) -> Result<()> {
        if beta.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter has length {} but loss expects {}",
                beta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn value(&self, beta: &DVector<f64>) -> Result<f64> {
        self.check_dim(beta)?;
        match self {
            Loss::CorrectedLinear(d) => {
                let gb = &d.gamma_hat * beta;
                Ok(0.5 * beta.dot(&gb) - d.gamma_vec.dot(beta))
            }
            Loss::Glm(d) => {
                let t = &d.x * beta;
                let n = d.x.nrows() as f64;
                let s: f64 = t
                    .iter()
                    .zip(d.y.iter())
                    .map(|(&ti, &yi)| cumulant(d.family, ti) - yi * ti)
                    .sum();
                Ok(s / n)
            }
            Loss::Glasso(d) => {
                let theta = symmetrize(&as_matrix(beta, d.p()));
                let chol = theta.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
                let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Ok(d.sigma_hat.component_mul(&theta).sum() - logdet)
            }
        }
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(beta)?;
        match self {
            Loss::CorrectedLinear(d) => Ok(&d.gamma_hat * beta - &d.gamma_vec),
            Loss::Glm(d) => {
                let t = &d.x * beta;
                let n = d.x.nrows() as f64;
                let r = DVector::from_iterator(
                    t.len(),
                    t.iter()
                        .zip(d.y.iter())
                        .map(|(&ti, &yi)| (mean_function(d.family, ti) - yi) / n),
                );
                Ok(d.x.tr_mul(&r))
            }
            Loss::Glasso(d) => {
                let theta = symmetrize(&as_matrix(beta, d.p()));
                let inv = theta
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite)?
                    .inverse();
                let g = symmetrize(&(&d.sigma_hat - inv));
                Ok(DVector::from_column_slice(g.as_slice()))
            }
        }
    }

    /// `T(β₁, β₂) = L(β₁) − L(β₂) − ⟨∇L(β₂), β₁ − β₂⟩`.
    pub fn taylor_error(&self, beta1: &DVector<f64>, beta2: &DVector<f64>) -> Result<f64> {
        self.check_dim(beta1)?;
        self.check_dim(beta2)?;
        let delta = beta1 - beta2;
        match self {
            Loss::CorrectedLinear(d) => Ok(0.5 * delta.dot(&(&d.gamma_hat * &delta))),
            _ => {
                let g2 = self.gradient(beta2)?;
                Ok(self.value(beta1)? - self.value(beta2)? - g2.dot(&delta))
            }
        }
    }

    /// `D(β̃; β*) = ⟨∇L(β̃) − ∇L(β*), β̃ − β*⟩`.
    pub fn prediction_error(&self, beta_tilde: &DVector<f64>, beta_star: &DVector<f64>) -> Result<f64> {
        self.check_dim(beta_tilde)?;
        self.check_dim(beta_star)?;
        let delta = beta_tilde - beta_star;
        match self {
            Loss::CorrectedLinear(d) => Ok(delta.dot(&(&d.gamma_hat * &delta))),
            _ => {
                let diff = self.gradient(beta_tilde)? - self.gradient(beta_star)?;
                Ok(diff.dot(&delta))
            }
        }
    }
}

/// `ψ(t)`: `log(1 + eᵗ)` for logistic, `t²/2` for Gaussian.
pub fn cumulant(family: GlmFamily, t: f64) -> f64 {
    match family {
        GlmFamily::Logistic => t.max(0.0) + (-t.abs()).exp().ln_1p(),
        GlmFamily::Gaussian => 0.5 * t * t,
    }
}

/// `ψ'(t)`.
pub fn mean_function(family: GlmFamily, t: f64) -> f64 {
    match family {
        GlmFamily::Logistic => sigmoid(t),
        GlmFamily::Gaussian => t,
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Reinterprets a column-major `p²` vector as a `p × p` matrix.
pub fn as_matrix(v: &DVector<f64>, p: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(p, p, v.as_slice())
}

pub fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// `Γ̂ = ZᵀZ/n − Σ_w`, `γ̂ = Zᵀy/n` for covariates observed with additive
/// noise of known covariance `Σ_w`.
pub fn build_corrected_gamma(z: &DMatrix<f64>, y: &DVector<f64>, sigma_w: &DMatrix<f64>) -> Result<CorrectedLinearData> {
    let (n, p) = z.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("Z has {n} rows, y has {}", y.len())));
    }
    if sigma_w.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "Sigma_w is {}x{}, expected {p}x{p}",
            sigma_w.nrows(),
            sigma_w.ncols()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let nf = n as f64;
    let gram = z.tr_mul(z) / nf;
    let gamma_vec = z.tr_mul(y) / nf;
    let provenance = if sigma_w.iter().all(|&v| v == 0.0) {
        Provenance::Clean
    } else {
        Provenance::AdditiveNoise
    };
    Ok(CorrectedLinearData::new(gram - sigma_w, gamma_vec, provenance)?.with_samples(n))
}

/// Least squares `(1/2n)‖y − Xβ‖²` up to a constant.
pub fn clean_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<CorrectedLinearData> {
    let p = x.ncols();
    build_corrected_gamma(x, y, &DMatrix::zeros(p, p))
}

/// Unbiased plug-ins under independent erasures with probability
/// `vartheta`. Missing entries are `NaN` in `z`.
///
/// Missing entries are zero-filled; off-diagonal Gram entries are divided
/// by `(1−ϑ)²`, diagonal entries and `γ̂` by `(1−ϑ)`.
pub fn build_missing_gamma(z: &DMatrix<f64>, y: &DVector<f64>, vartheta: f64) -> Result<CorrectedLinearData> {
    if !(0.0..1.0).contains(&vartheta) {
        return Err(Error::InvalidParameter(format!(
            "missing probability must lie in [0, 1), got {vartheta}"
        )));
    }
    let (n, p) = z.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("Z has {n} rows, y has {}", y.len())));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let filled = z.map(|v| if v.is_nan() { 0.0 } else { v });
    for j in 0..p {
        if z.column(j).iter().all(|v| v.is_nan()) {
            warn!("column {j} is entirely missing; its row and column of Gamma are set to 0");
        }
    }
    let nf = n as f64;
    let keep = 1.0 - vartheta;
    let mut gram = filled.tr_mul(&filled) / nf;
    for j in 0..p {
        for k in 0..p {
            gram[(j, k)] /= if j == k { keep } else { keep * keep };
        }
    }
    let gamma_vec = filled.tr_mul(y) / (nf * keep);
    Ok(CorrectedLinearData::new(gram, gamma_vec, Provenance::MissingData)?.with_samples(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_vec(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(p, |_, _| rng.random_range(-scale..scale))
    }

    fn logistic_problem(seed: u64, n: usize, p: usize) -> Loss {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, n, p);
        let y = DVector::from_fn(n, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        Loss::Glm(GlmData::new(x, y, GlmFamily::Logistic).unwrap())
    }

    fn spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
        let a = random_matrix(rng, p, p);
        &a * a.transpose() + DMatrix::identity(p, p) * 0.5
    }

    fn fd_gradient(loss: &Loss, beta: &DVector<f64>) -> DVector<f64> {
        let h = 1e-6;
        DVector::from_fn(beta.len(), |j, _| {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            (loss.value(&up).unwrap() - loss.value(&dn).unwrap()) / (2.0 * h)
        })
    }

    fn assert_gradient_matches(loss: &Loss, beta: &DVector<f64>) {
        let g = loss.gradient(beta).unwrap();
        let fd = fd_gradient(loss, beta);
        let scale = g.amax().max(1.0);
        assert!((g - fd).amax() / scale < 1e-5);
    }

    #[test]
    fn corrected_linear_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_matrix(&mut rng, 30, 5);
        let y = random_vec(&mut rng, 30, 1.0);
        let d = build_corrected_gamma(&z, &y, &(DMatrix::identity(5, 5) * 0.04)).unwrap();
        let loss = Loss::CorrectedLinear(d.clone());
        assert_eq!(loss.value(&DVector::zeros(5)).unwrap(), 0.0);
        assert_eq!(loss.gradient(&DVector::zeros(5)).unwrap(), -d.gamma_vec().clone());
        assert_eq!(d.provenance(), Provenance::AdditiveNoise);
    }

    #[test]
    fn corrected_gamma_arithmetic() {
        let z = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let y = DVector::from_vec(vec![2.0, 2.0]);
        let d = build_corrected_gamma(&z, &y, &DMatrix::from_element(1, 1, 0.04)).unwrap();
        assert_abs_diff_eq!(d.gamma_hat()[(0, 0)], 0.96, epsilon = 1e-15);
        assert_abs_diff_eq!(d.gamma_vec()[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn corrected_gamma_without_noise_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 40, 6);
        let y = random_vec(&mut rng, 40, 1.0);
        let d = build_corrected_gamma(&x, &y, &DMatrix::zeros(6, 6)).unwrap();
        assert_eq!(d.provenance(), Provenance::Clean);
        let expected = x.tr_mul(&x) / 40.0;
        assert!((d.gamma_hat() - expected).amax() < 1e-14);
        // value differs from (1/2n)‖y − Xβ‖² by the constant ‖y‖²/2n
        let loss = Loss::CorrectedLinear(d);
        let beta = random_vec(&mut rng, 6, 1.0);
        let ls = (&y - &x * &beta).norm_squared() / 80.0 - y.norm_squared() / 80.0;
        assert_abs_diff_eq!(loss.value(&beta).unwrap(), ls, epsilon = 1e-12);
    }

    #[test]
    fn corrected_gamma_dimension_errors() {
        let z = DMatrix::zeros(4, 3);
        assert!(build_corrected_gamma(&z, &DVector::zeros(5), &DMatrix::zeros(3, 3)).is_err());
        assert!(build_corrected_gamma(&z, &DVector::zeros(4), &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn gamma_is_symmetrized() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let d = CorrectedLinearData::new(m, DVector::zeros(2), Provenance::Clean).unwrap();
        assert_eq!(d.gamma_hat()[(0, 1)], 1.0);
        assert_eq!(d.gamma_hat()[(1, 0)], 1.0);
    }

    #[test]
    fn missing_gamma_without_erasures_matches_clean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 25, 4);
        let y = random_vec(&mut rng, 25, 1.0);
        let a = build_missing_gamma(&x, &y, 0.0).unwrap();
        let b = build_corrected_gamma(&x, &y, &DMatrix::zeros(4, 4)).unwrap();
        assert!((a.gamma_hat() - b.gamma_hat()).amax() < 1e-15);
        assert!((a.gamma_vec() - b.gamma_vec()).amax() < 1e-15);
    }

    #[test]
    fn missing_gamma_guards_empty_columns() {
        let mut z = DMatrix::from_element(5, 3, 1.0);
        z.column_mut(1).fill(f64::NAN);
        let d = build_missing_gamma(&z, &DVector::from_element(5, 1.0), 0.3).unwrap();
        for k in 0..3 {
            assert_eq!(d.gamma_hat()[(1, k)], 0.0);
            assert_eq!(d.gamma_hat()[(k, 1)], 0.0);
        }
        assert_eq!(d.gamma_vec()[1], 0.0);
        assert!(build_missing_gamma(&z, &DVector::zeros(5), 1.0).is_err());
        assert!(build_missing_gamma(&z, &DVector::zeros(5), -0.1).is_err());
    }

    #[test]
    fn logistic_value_at_zero_is_log_two() {
        let loss = logistic_problem(4, 17, 3);
        assert_abs_diff_eq!(loss.value(&DVector::zeros(3)).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let loss = logistic_problem(5, 20, 4);
        let Loss::Glm(d) = &loss else { unreachable!() };
        let mut expected = DVector::zeros(4);
        for i in 0..20 {
            expected += d.x().row(i).transpose() * ((0.5 - d.y()[i]) / 20.0);
        }
        let g = loss.gradient(&DVector::zeros(4)).unwrap();
        assert!((&g - &expected).amax() < 1e-15);
        assert_gradient_matches(&loss, &DVector::zeros(4));
    }

    #[test]
    fn logistic_is_overflow_safe() {
        assert_abs_diff_eq!(cumulant(GlmFamily::Logistic, 800.0), 800.0, epsilon = 1e-12);
        assert!(cumulant(GlmFamily::Logistic, -800.0) >= 0.0);
        assert!(cumulant(GlmFamily::Logistic, -800.0) < 1e-300);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn logistic_rejects_non_binary_response() {
        let x = DMatrix::zeros(2, 2);
        assert!(GlmData::new(x.clone(), DVector::from_vec(vec![0.0, 0.5]), GlmFamily::Logistic).is_err());
        assert!(GlmData::new(x, DVector::from_vec(vec![0.0, 0.5]), GlmFamily::Gaussian).is_ok());
    }

    #[test]
    fn glasso_identity_value() {
        let loss = Loss::Glasso(GlassoData::new(DMatrix::identity(2, 2)).unwrap());
        let theta = flatten(&DMatrix::identity(2, 2));
        assert_abs_diff_eq!(loss.value(&theta).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn glasso_gradient_vanishes_at_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sigma = spd(&mut rng, 4);
        let loss = Loss::Glasso(GlassoData::new(sigma.clone()).unwrap());
        let theta = flatten(&sigma.clone().try_inverse().unwrap());
        assert!(loss.gradient(&theta).unwrap().amax() < 1e-10);
    }

    #[test]
    fn glasso_rejects_non_pd() {
        let loss = Loss::Glasso(GlassoData::new(DMatrix::identity(2, 2)).unwrap());
        let theta = flatten(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(loss.value(&theta), Err(Error::NotPositiveDefinite)));
        assert!(matches!(loss.gradient(&theta), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let p = 2 + trial % 9;
            let z = random_matrix(&mut rng, 15, p);
            let y = random_vec(&mut rng, 15, 1.0);
            let lin = Loss::CorrectedLinear(build_corrected_gamma(&z, &y, &(DMatrix::identity(p, p) * 0.3)).unwrap());
            assert_gradient_matches(&lin, &random_vec(&mut rng, p, 1.0));

            let logi = logistic_problem(100 + trial as u64, 25, p);
            assert_gradient_matches(&logi, &random_vec(&mut rng, p, 1.0));

            let q = 2 + trial % 4;
            let sigma = spd(&mut rng, q);
            let gl = Loss::Glasso(GlassoData::new(sigma).unwrap());
            // symmetric perturbations keep entrywise derivatives meaningful
            let theta = flatten(&spd(&mut rng, q));
            assert_gradient_matches(&gl, &theta);
        }
    }

    #[test]
    fn taylor_error_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = random_matrix(&mut rng, 10, 6);
        let y = random_vec(&mut rng, 10, 1.0);
        let d = build_corrected_gamma(&z, &y, &(DMatrix::identity(6, 6) * 0.2)).unwrap();
        let loss = Loss::CorrectedLinear(d.clone());
        let b1 = random_vec(&mut rng, 6, 2.0);
        let b2 = random_vec(&mut rng, 6, 2.0);
        assert_eq!(loss.taylor_error(&b1, &b1).unwrap(), 0.0);
        let delta = &b1 - &b2;
        let by_definition =
            loss.value(&b1).unwrap() - loss.value(&b2).unwrap() - loss.gradient(&b2).unwrap().dot(&delta);
        assert_abs_diff_eq!(loss.taylor_error(&b1, &b2).unwrap(), by_definition, epsilon = 1e-10);
        assert_abs_diff_eq!(
            loss.prediction_error(&b1, &b2).unwrap(),
            delta.dot(&(d.gamma_hat() * &delta)),
            epsilon = 1e-12
        );
        assert_eq!(loss.prediction_error(&b2, &b2).unwrap(), 0.0);
    }

    #[test]
    fn convex_losses_have_nonnegative_taylor_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logi = logistic_problem(10, 30, 5);
        let x = random_matrix(&mut rng, 30, 5);
        let ls = Loss::CorrectedLinear(clean_least_squares(&x, &random_vec(&mut rng, 30, 1.0)).unwrap());
        for _ in 0..100 {
            let b1 = random_vec(&mut rng, 5, 3.0);
            let b2 = random_vec(&mut rng, 5, 3.0);
            assert!(logi.taylor_error(&b1, &b2).unwrap() >= -1e-10);
            assert!(ls.taylor_error(&b1, &b2).unwrap() >= -1e-10);
        }
    }

    #[test]
    fn least_squares_prediction_error_is_fixed_design_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random_matrix(&mut rng, 50, 7);
        let loss = Loss::CorrectedLinear(clean_least_squares(&x, &random_vec(&mut rng, 50, 1.0)).unwrap());
        let bt = random_vec(&mut rng, 7, 1.0);
        let bs = random_vec(&mut rng, 7, 1.0);
        let expected = (&x * (&bt - &bs)).norm_squared() / 50.0;
        assert_abs_diff_eq!(loss.prediction_error(&bt, &bs).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn dimension_checks() {
        let loss = logistic_problem(13, 5, 3);
        assert!(matches!(loss.value(&DVector::zeros(2)), Err(Error::DimensionMismatch(_))));
        assert_eq!(loss.dim(), 3);
        let gl = Loss::Glasso(GlassoData::new(DMatrix::identity(3, 3)).unwrap());
        assert_eq!(gl.dim(), 9);
        assert_eq!(gl.matrix_side(), Some(3));
    }
}
