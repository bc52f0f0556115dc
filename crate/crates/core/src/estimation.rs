//! Estimators for the NB-INAR(1) model and their predicted asymptotic
//! covariances.
//!
//! For a series of length `m` the first value plays the role of `X_0` and
//! every conditional sum runs over the `n = m - 1` transitions.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::NB_TAIL_EPS;
use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::process::{Series, TransitionKernel};
use crate::thinning::ModelParams;

pub type Mat2 = [[f64; 2]; 2];

/// Per-transition log-probability floor used when a probability underflows.
pub const LOG_PROB_FLOOR: f64 = -745.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMethod {
    Cls,
    Yw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimates {
    pub alpha_hat: f64,
    pub mu_eps_hat: f64,
    /// `μ̂_ε / (1 - α̂)`; NaN when `α̂ = 1`.
    pub mu_hat: f64,
    pub method: MeanMethod,
    /// Number of transitions.
    pub n: usize,
    pub in_range: bool,
}

impl MeanEstimates {
    fn new(alpha_hat: f64, mu_eps_hat: f64, mu_hat: f64, method: MeanMethod, n: usize) -> Self {
        let in_range = alpha_hat > 0.0 && alpha_hat < 1.0 && mu_eps_hat > 0.0;
        Self { alpha_hat, mu_eps_hat, mu_hat, method, n, in_range }
    }
}

/// Exact integer sums over consecutive pairs `(X_{t-1}, X_t)`.
#[derive(Debug, Clone, Copy)]
struct LagSums {
    n: i128,
    prev: i128,
    cur: i128,
    prev_sq: i128,
    cross: i128,
}

impl LagSums {
    fn new(values: &[u64]) -> Self {
        let mut s = LagSums { n: 0, prev: 0, cur: 0, prev_sq: 0, cross: 0 };
        for w in values.windows(2) {
            let (a, b) = (w[0] as i128, w[1] as i128);
            s.n += 1;
            s.prev += a;
            s.cur += b;
            s.prev_sq += a * a;
            s.cross += a * b;
        }
        s
    }

    /// `n Σ X_{t-1}² - (Σ X_{t-1})²`
    fn denominator(&self) -> i128 {
        self.n * self.prev_sq - self.prev * self.prev
    }
}

fn require_len(series: &Series, min: usize) -> Result<()> {
    if series.len() < min {
        return Err(Error::DegenerateSeries(format!(
            "need at least {min} observations, got {}",
            series.len()
        )));
    }
    Ok(())
}

/// Conditional least squares for `(α, μ_ε)`.
pub fn cls_means(series: &Series) -> Result<MeanEstimates> {
    require_len(series, 3)?;
    let s = LagSums::new(&series.values);
    let d = s.denominator();
    if d == 0 {
        return Err(Error::DegenerateSeries(
            "lagged values are constant, least squares denominator is zero".into(),
        ));
    }
    let df = d as f64;
    let alpha = (s.n * s.cross - s.prev * s.cur) as f64 / df;
    let mu_eps = (s.prev_sq * s.cur - s.prev * s.cross) as f64 / df;
    Ok(MeanEstimates::new(alpha, mu_eps, mu_from(alpha, mu_eps), MeanMethod::Cls, s.n as usize))
}

/// `(Σ X_t - α̂ Σ X_{t-1}) / n`, the compact form of the CLS intercept.
pub fn cls_mu_eps_compact(series: &Series, alpha_hat: f64) -> f64 {
    let s = LagSums::new(&series.values);
    (s.cur as f64 - alpha_hat * s.prev as f64) / s.n as f64
}

fn mu_from(alpha: f64, mu_eps: f64) -> f64 {
    if alpha == 1.0 {
        f64::NAN
    } else {
        mu_eps / (1.0 - alpha)
    }
}

/// `Q_n(α, μ_ε) = Σ (X_t - αX_{t-1} - μ_ε)²`.
pub fn cls_objective(series: &Series, alpha: f64, mu_eps: f64) -> f64 {
    series
        .values
        .windows(2)
        .map(|w| (w[1] as f64 - alpha * w[0] as f64 - mu_eps).powi(2))
        .sum()
}

/// Yule–Walker moment estimators.
pub fn yw_means(series: &Series) -> Result<MeanEstimates> {
    require_len(series, 3)?;
    let mean = series.mean();
    let d: Vec<f64> = series.values.iter().map(|&x| x as f64 - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::DegenerateSeries("series has zero sample variance".into()));
    }
    let num: f64 = d.windows(2).map(|w| w[0] * w[1]).sum();
    let alpha = num / denom;
    let mu_eps = (1.0 - alpha) * mean;
    Ok(MeanEstimates::new(alpha, mu_eps, mean, MeanMethod::Yw, series.len() - 1))
}

/// Where the residual means come from in [`cls_variances`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanInput {
    Estimated(MeanEstimates),
    Known { alpha: f64, mu_eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualMode {
    EstimatedMeans,
    KnownMeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimates {
    pub sigma_g2_hat: f64,
    pub sigma_eps2_hat: f64,
    /// `(μ̂ σ̂_G² + σ̂_ε²) / (1 - α̂²)`.
    pub sigma2_hat: f64,
    /// `(μ̂_ε σ̂_G² + (1-α̂) σ̂_ε²) / ((1-α̂)²(1+α̂))`, an equivalent display form;
    /// algebraically equal to `sigma2_hat` whenever `μ̂ = μ̂_ε / (1-α̂)`.
    pub sigma2_hat_display: f64,
    /// `μ̂_ε² / (σ̂_ε² - μ̂_ε)`, only defined under overdispersion.
    pub r_hat: Option<f64>,
    pub alpha_used: f64,
    pub mu_eps_used: f64,
    pub residual_mode: ResidualMode,
}

/// Least squares for the conditional variance `σ_G² X_{t-1} + σ_ε²`.
pub fn cls_variances(series: &Series, means: MeanInput) -> Result<VarianceEstimates> {
    require_len(series, 3)?;
    let (alpha, mu_eps, mode) = match means {
        MeanInput::Estimated(m) => (m.alpha_hat, m.mu_eps_hat, ResidualMode::EstimatedMeans),
        MeanInput::Known { alpha, mu_eps } => (alpha, mu_eps, ResidualMode::KnownMeans),
    };
    let s = LagSums::new(&series.values);
    let d = s.denominator();
    if d == 0 {
        return Err(Error::DegenerateSeries(
            "lagged values are constant, least squares denominator is zero".into(),
        ));
    }
    let (mut su2, mut su2x) = (0.0, 0.0);
    for w in series.values.windows(2) {
        let x_prev = w[0] as f64;
        let u2 = (w[1] as f64 - alpha * x_prev - mu_eps).powi(2);
        su2 += u2;
        su2x += u2 * x_prev;
    }
    let (n, sx, sxx, df) = (s.n as f64, s.prev as f64, s.prev_sq as f64, d as f64);
    let sigma_g2 = (n * su2x - sx * su2) / df;
    let sigma_eps2 = (sxx * su2 - su2x * sx) / df;

    let mu = mu_eps / (1.0 - alpha);
    let sigma2 = (mu * sigma_g2 + sigma_eps2) / (1.0 - alpha * alpha);
    let sigma2_display =
        (mu_eps * sigma_g2 + (1.0 - alpha) * sigma_eps2) / ((1.0 - alpha).powi(2) * (1.0 + alpha));
    let r_hat = (sigma_eps2 > mu_eps).then(|| mu_eps * mu_eps / (sigma_eps2 - mu_eps));

    Ok(VarianceEstimates {
        sigma_g2_hat: sigma_g2,
        sigma_eps2_hat: sigma_eps2,
        sigma2_hat: sigma2,
        sigma2_hat_display: sigma2_display,
        r_hat,
        alpha_used: alpha,
        mu_eps_used: mu_eps,
        residual_mode: mode,
    })
}

/// `Σ (U_t² - σ_G² X_{t-1} - σ_ε²)²` with `U_t = X_t - αX_{t-1} - μ_ε`.
pub fn variance_objective(
    series: &Series,
    alpha: f64,
    mu_eps: f64,
    sigma_g2: f64,
    sigma_eps2: f64,
) -> f64 {
    series
        .values
        .windows(2)
        .map(|w| {
            let x_prev = w[0] as f64;
            let u2 = (w[1] as f64 - alpha * x_prev - mu_eps).powi(2);
            (u2 - sigma_g2 * x_prev - sigma_eps2).powi(2)
        })
        .sum()
}

/// Distributional summaries of `G`, `ε` and `X` used by the covariance
/// formulas. Central moments are stored as `[mean, m2, m3, m4]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelMoments {
    pub offspring: [f64; 4],
    pub innovation: [f64; 4],
    pub marginal: [f64; 4],
    /// `μσ_G² + σ_ε²`, which equals `(1 - α²)σ²`.
    pub c2: f64,
}

impl ModelMoments {
    pub fn new(p: &ModelParams) -> Self {
        let offspring = p.g_central_moments();
        let innovation = p.innovation().central_moments();
        let marginal = p.marginal().central_moments();
        let c2 = p.mu * offspring[1] + innovation[1];
        Self { offspring, innovation, marginal, c2 }
    }

    /// Coefficients `[c0, c1, c2]` of `R(x) = Var(U_t² | X_{t-1} = x)`, a
    /// quadratic in `x`:
    /// `2σ_G⁴x² + (μ₄^G + 4σ_G²σ_ε² - 3σ_G⁴)x + μ₄^ε - σ_ε⁴`.
    pub fn squared_residual_variance_coeffs(&self) -> [f64; 3] {
        let sg2 = self.offspring[1];
        let se2 = self.innovation[1];
        [
            self.innovation[3] - se2 * se2,
            self.offspring[3] + 4.0 * sg2 * se2 - 3.0 * sg2 * sg2,
            2.0 * sg2 * sg2,
        ]
    }

    pub fn squared_residual_variance(&self, x: f64) -> f64 {
        let [c0, c1, c2] = self.squared_residual_variance_coeffs();
        c0 + c1 * x + c2 * x * x
    }
}

/// Predicted asymptotic covariance matrices of the √n-scaled estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovMatrices {
    /// `(α̂, μ̂_ε)` from CLS (and YW).
    pub sigma_means: Mat2,
    /// `(α̂, μ̂)` by the delta method, `J Σ J'`.
    pub sigma_alpha_mu: Mat2,
    /// `(σ̂_G², σ̂_ε²)`, `Φ⁻¹ Σ₁ Φ'⁻¹`.
    pub sigma_vars: Mat2,
}

pub fn predicted_cov(p: &ModelParams) -> CovMatrices {
    let m = ModelMoments::new(p);
    let mu = p.mu;
    let sg2 = m.offspring[1];
    let se2 = m.innovation[1];
    let s2 = m.marginal[1];
    let mu3 = m.marginal[2];
    let c2 = m.c2;
    let s4 = s2 * s2;

    let s11 = (sg2 * mu3 + c2 * s2) / s4;
    let s12 = -(mu * sg2 * mu3 + mu * c2 * s2 - sg2 * s4) / s4;
    let s22 = (mu * mu * sg2 * mu3 + mu * mu * c2 * s2 + se2 * s4 - mu * sg2 * s4) / s4;
    let sigma_means = [[s11, s12], [s12, s22]];

    let abar = 1.0 - p.alpha;
    let jac = [[1.0, 0.0], [mu / abar, 1.0 / abar]];
    let sigma_alpha_mu = sandwich(&jac, &sigma_means);

    let sigma1 = residual_square_moments(p, &m);
    let ex2 = s2 + mu * mu;
    let phi_inv = [[1.0 / s2, -mu / s2], [-mu / s2, ex2 / s2]];
    let sigma_vars = sandwich(&phi_inv, &sigma1);

    CovMatrices { sigma_means, sigma_alpha_mu, sigma_vars }
}

/// `Σ₁ = E[R(X) (X, 1)'(X, 1)]` by truncated summation over the NB(r, μ)
/// marginal, run to twice the usual cutoff since `R` grows quadratically.
fn residual_square_moments(p: &ModelParams, m: &ModelMoments) -> Mat2 {
    let marginal = p.marginal();
    let k_max = 2 * marginal.truncation_point(NB_TAIL_EPS);
    let mut acc = [0.0; 3];
    for k in 0..=k_max {
        let w = marginal.pmf(k) * m.squared_residual_variance(k as f64);
        let x = k as f64;
        acc[0] += w * x * x;
        acc[1] += w * x;
        acc[2] += w;
    }
    [[acc[0], acc[1]], [acc[1], acc[2]]]
}

/// `A M A'`
pub fn sandwich(a: &Mat2, m: &Mat2) -> Mat2 {
    let am = mat_mul(a, m);
    mat_mul(&am, &transpose(a))
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Result of [`loglik`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLik {
    pub value: f64,
    /// Transitions whose probability underflowed and were floored at
    /// [`LOG_PROB_FLOOR`].
    pub underflows: usize,
}

/// Conditional log-likelihood given the first observation.
pub fn loglik(series: &Series, p: &ModelParams) -> Result<LogLik> {
    require_len(series, 2)?;
    let max_state = *series.values.iter().max().expect("non-empty") as usize;
    let kernel = TransitionKernel::new(p, 1, max_state);
    let mut rows: HashMap<u64, Vec<f64>> = HashMap::new();
    let mut value = 0.0;
    let mut underflows = 0;
    for w in series.values.windows(2) {
        let row = rows.entry(w[0]).or_insert_with(|| kernel.row(w[0]));
        let prob = row[w[1] as usize];
        if prob > 0.0 && prob.is_finite() {
            value += prob.ln().max(LOG_PROB_FLOOR);
        } else {
            value += LOG_PROB_FLOOR;
            underflows += 1;
        }
    }
    Ok(LogLik { value, underflows })
}

/// Outcome of a conditional maximum likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmlFit {
    pub params: ModelParams,
    pub loglik: f64,
    pub init: ModelParams,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const CML_ALPHA_CLIP: (f64, f64) = (0.01, 0.99);
const CML_R_CLIP: (f64, f64) = (0.01, 100.0);

/// Starting point for [`cml_fit`]: clipped Yule–Walker means and the
/// moment estimator of `r` from the variance regression.
pub fn cml_default_init(series: &Series) -> Result<ModelParams> {
    let mean = series.mean();
    let fallback = || ModelParams::new(0.5, mean, 1.0);
    let Ok(yw) = yw_means(series) else {
        return fallback();
    };
    let alpha = yw.alpha_hat.clamp(CML_ALPHA_CLIP.0, CML_ALPHA_CLIP.1);
    let r = cls_variances(series, MeanInput::Estimated(yw))
        .ok()
        .and_then(|v| v.r_hat)
        .map(|r| r.clamp(CML_R_CLIP.0, CML_R_CLIP.1))
        .unwrap_or(1.0);
    ModelParams::new(alpha, yw.mu_hat, r).or_else(|_| fallback())
}

fn to_unconstrained(p: &ModelParams) -> [f64; 3] {
    [(p.alpha / (1.0 - p.alpha)).ln(), p.mu.ln(), p.r.ln()]
}

fn from_unconstrained(z: &[f64]) -> Result<ModelParams> {
    let alpha = 1.0 / (1.0 + (-z[0]).exp());
    ModelParams::new(alpha, z[1].exp(), z[2].exp())
}

/// Maximizes the conditional likelihood over `(logit α, ln μ, ln r)` with
/// Nelder–Mead.
pub fn cml_fit(series: &Series, init: Option<ModelParams>) -> Result<CmlFit> {
    require_len(series, 2)?;
    let init = match init {
        Some(p) => p.validated()?,
        None => cml_default_init(series)?,
    };
    let objective = |z: &[f64]| match from_unconstrained(z) {
        Ok(p) => match loglik(series, &p) {
            Ok(ll) => -ll.value,
            Err(_) => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    };
    let start = to_unconstrained(&init);
    let min = nelder_mead(objective, &start, NelderMeadOptions::default());
    let params = from_unconstrained(&min.point)?;
    Ok(CmlFit {
        params,
        loglik: -min.value,
        init,
        iterations: min.iterations,
        evaluations: min.evaluations,
        converged: min.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMethod {
    Cls,
    Yw,
    ClsVar,
    Cml,
}

impl EstimationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimationMethod::Cls => "cls",
            EstimationMethod::Yw => "yw",
            EstimationMethod::ClsVar => "cls-var",
            EstimationMethod::Cml => "cml",
        }
    }
}

impl fmt::Display for EstimationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimationMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(EstimationMethod::Cls),
            "yw" => Ok(EstimationMethod::Yw),
            "cls-var" => Ok(EstimationMethod::ClsVar),
            "cml" => Ok(EstimationMethod::Cml),
            other => Err(Error::Config(format!("unknown estimation method `{other}`"))),
        }
    }
}

/// Flat, JSON-friendly summary of one estimation run. Fields that do not
/// apply to the method are `null`; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: EstimationMethod,
    pub n: usize,
    pub alpha_hat: Option<f64>,
    pub mu_eps_hat: Option<f64>,
    pub mu_hat: Option<f64>,
    pub sigma_g2_hat: Option<f64>,
    pub sigma_eps2_hat: Option<f64>,
    pub sigma2_hat: Option<f64>,
    pub sigma2_hat_display: Option<f64>,
    pub r_hat: Option<f64>,
    pub residual_mode: Option<ResidualMode>,
    pub in_range: bool,
    pub r_hat_defined: bool,
    pub loglik: Option<f64>,
    pub loglik_underflows: Option<usize>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub cov_means: Option<[f64; 4]>,
    pub cov_alpha_mu: Option<[f64; 4]>,
    pub cov_vars: Option<[f64; 4]>,
}

impl EstimateReport {
    fn empty(method: EstimationMethod, n: usize) -> Self {
        Self {
            method,
            n,
            alpha_hat: None,
            mu_eps_hat: None,
            mu_hat: None,
            sigma_g2_hat: None,
            sigma_eps2_hat: None,
            sigma2_hat: None,
            sigma2_hat_display: None,
            r_hat: None,
            residual_mode: None,
            in_range: false,
            r_hat_defined: false,
            loglik: None,
            loglik_underflows: None,
            iterations: None,
            converged: None,
            cov_means: None,
            cov_alpha_mu: None,
            cov_vars: None,
        }
    }

    fn set_means(&mut self, m: &MeanEstimates) {
        self.alpha_hat = Some(m.alpha_hat);
        self.mu_eps_hat = Some(m.mu_eps_hat);
        self.mu_hat = Some(m.mu_hat).filter(|v| v.is_finite());
        self.in_range = m.in_range;
    }

    fn set_variances(&mut self, v: &VarianceEstimates) {
        self.sigma_g2_hat = Some(v.sigma_g2_hat);
        self.sigma_eps2_hat = Some(v.sigma_eps2_hat);
        self.sigma2_hat = Some(v.sigma2_hat).filter(|x| x.is_finite());
        self.sigma2_hat_display = Some(v.sigma2_hat_display).filter(|x| x.is_finite());
        self.r_hat = v.r_hat;
        self.r_hat_defined = v.r_hat.is_some();
        self.residual_mode = Some(v.residual_mode);
    }

    fn set_plugin_cov(&mut self, p: Option<ModelParams>) {
        if let Some(p) = p {
            let cov = predicted_cov(&p);
            self.cov_means = Some(flatten(&cov.sigma_means));
            self.cov_alpha_mu = Some(flatten(&cov.sigma_alpha_mu));
            self.cov_vars = Some(flatten(&cov.sigma_vars));
        }
    }
}

fn flatten(m: &Mat2) -> [f64; 4] {
    [m[0][0], m[0][1], m[1][0], m[1][1]]
}

/// Runs one estimator on `series`. `known` fixes `(α, μ_ε)` for the
/// variance regression.
pub fn estimate(
    series: &Series,
    method: EstimationMethod,
    known: Option<(f64, f64)>,
) -> Result<EstimateReport> {
    let n = series.len().saturating_sub(1);
    let mut report = EstimateReport::empty(method, n);
    match method {
        EstimationMethod::Cls | EstimationMethod::Yw => {
            let means = if method == EstimationMethod::Cls {
                cls_means(series)?
            } else {
                yw_means(series)?
            };
            report.set_means(&means);
            let vars = cls_variances(series, MeanInput::Estimated(means))?;
            report.r_hat = vars.r_hat;
            report.r_hat_defined = vars.r_hat.is_some();
            report.set_plugin_cov(plugin(&means, vars.r_hat));
        }
        EstimationMethod::ClsVar => {
            let means = cls_means(series)?;
            report.set_means(&means);
            let input = match known {
                Some((alpha, mu_eps)) => MeanInput::Known { alpha, mu_eps },
                None => MeanInput::Estimated(means),
            };
            let vars = cls_variances(series, input)?;
            report.set_variances(&vars);
            report.set_plugin_cov(plugin(&means, vars.r_hat));
        }
        EstimationMethod::Cml => {
            let fit = cml_fit(series, None)?;
            let p = fit.params;
            report.alpha_hat = Some(p.alpha);
            report.mu_hat = Some(p.mu);
            report.mu_eps_hat = Some(p.mu_eps());
            report.r_hat = Some(p.r);
            report.r_hat_defined = true;
            report.in_range = true;
            report.loglik = Some(fit.loglik);
            report.loglik_underflows = Some(loglik(series, &p)?.underflows);
            report.iterations = Some(fit.iterations);
            report.converged = Some(fit.converged);
            report.set_plugin_cov(Some(p));
        }
    }
    Ok(report)
}

fn plugin(means: &MeanEstimates, r_hat: Option<f64>) -> Option<ModelParams> {
    if !means.in_range {
        return None;
    }
    ModelParams::new(means.alpha_hat, means.mu_hat, r_hat?).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{simulate, transition_prob};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geo() -> ModelParams {
        ModelParams::new(0.5, 2.0, 1.0).unwrap()
    }

    fn grid() -> Vec<ModelParams> {
        let mut out = Vec::new();
        for &alpha in &[0.2, 0.5, 0.8] {
            for &(mu, r) in &[(1.0, 0.5), (2.0, 1.0), (5.0, 3.0)] {
                out.push(ModelParams::new(alpha, mu, r).unwrap());
            }
        }
        out
    }

    fn sim(p: &ModelParams, n: usize, seed: u64) -> Series {
        simulate(p, n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn cls_hand_example() {
        let s = Series::new(vec![1, 2, 1, 2, 1]);
        let m = cls_means(&s).unwrap();
        assert_eq!(m.alpha_hat, -1.0);
        assert_eq!(m.mu_eps_hat, 3.0);
        assert_eq!(m.n, 4);
        assert!(!m.in_range);
        assert_eq!(cls_mu_eps_compact(&s, m.alpha_hat), 3.0);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = Series::new(vec![4; 10]);
        assert!(matches!(cls_means(&s), Err(Error::DegenerateSeries(_))));
        assert!(matches!(yw_means(&s), Err(Error::DegenerateSeries(_))));
        assert!(matches!(cls_means(&Series::new(vec![1, 2])), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn yw_hand_example() {
        let s = Series::new(vec![1, 2, 1, 2, 1]);
        let m = yw_means(&s).unwrap();
        assert!((m.mu_hat - 1.4).abs() < 1e-15);
        // deviations (-.4, .6, -.4, .6, -.4): lagged products -0.24 x4, squares sum 1.2
        assert!((m.alpha_hat - (-0.96 / 1.2)).abs() < 1e-14);
        assert!((m.mu_eps_hat - (1.0 - m.alpha_hat) * 1.4).abs() < 1e-15);
    }

    #[test]
    fn yw_near_independence() {
        let p = ModelParams::new(1e-9, 2.0, 1.0).unwrap();
        let m = yw_means(&sim(&p, 50_000, 4)).unwrap();
        assert!(m.alpha_hat.abs() < 0.02);
    }

    #[test]
    fn cls_is_first_order_optimal() {
        for (k, p) in grid().iter().enumerate() {
            let s = sim(p, 300, k as u64);
            let m = cls_means(&s).unwrap();
            let best = cls_objective(&s, m.alpha_hat, m.mu_eps_hat);
            for da in [-1e-3, 0.0, 1e-3] {
                for dm in [-1e-3, 0.0, 1e-3] {
                    assert!(best <= cls_objective(&s, m.alpha_hat + da, m.mu_eps_hat + dm));
                }
            }
            let compact = cls_mu_eps_compact(&s, m.alpha_hat);
            assert!((compact - m.mu_eps_hat).abs() < 1e-12);
        }
    }

    #[test]
    fn cls_consistency() {
        let m = cls_means(&sim(&geo(), 5001, 31)).unwrap();
        assert!((m.alpha_hat - 0.5).abs() < 0.05);
        assert!((m.mu_eps_hat - 1.0).abs() < 0.1);
        assert!(m.in_range);
        assert!((m.mu_hat - m.mu_eps_hat / (1.0 - m.alpha_hat)).abs() < 1e-15);
    }

    #[test]
    fn variance_cls_is_optimal_and_consistent() {
        let s = sim(&geo(), 10_001, 9);
        let means = cls_means(&s).unwrap();
        let v = cls_variances(&s, MeanInput::Estimated(means)).unwrap();
        assert!((v.sigma_g2_hat - 1.25).abs() < 0.2);
        assert!((v.sigma_eps2_hat - 2.0).abs() < 0.3);
        let best = variance_objective(&s, v.alpha_used, v.mu_eps_used, v.sigma_g2_hat, v.sigma_eps2_hat);
        for dg in [-1e-3, 0.0, 1e-3] {
            for de in [-1e-3, 0.0, 1e-3] {
                let other = variance_objective(
                    &s,
                    v.alpha_used,
                    v.mu_eps_used,
                    v.sigma_g2_hat + dg,
                    v.sigma_eps2_hat + de,
                );
                assert!(best <= other);
            }
        }
        assert!((v.sigma2_hat - v.sigma2_hat_display).abs() < 1e-10 * v.sigma2_hat);
        assert!(v.r_hat.is_some());

        let known = cls_variances(&s, MeanInput::Known { alpha: 0.5, mu_eps: 1.0 }).unwrap();
        assert_eq!(known.residual_mode, ResidualMode::KnownMeans);
        assert!((known.sigma_g2_hat - v.sigma_g2_hat).abs() < 0.2);
        assert!((known.sigma_eps2_hat - v.sigma_eps2_hat).abs() < 0.3);
    }

    #[test]
    fn variance_cls_minimal_input() {
        let v = cls_variances(&Series::new(vec![0, 3, 1]), MeanInput::Known { alpha: 0.5, mu_eps: 1.0 }).unwrap();
        assert!(v.sigma_g2_hat.is_finite() && v.sigma_eps2_hat.is_finite());
        let m = cls_means(&Series::new(vec![0, 3, 1])).unwrap();
        let v = cls_variances(&Series::new(vec![0, 3, 1]), MeanInput::Estimated(m)).unwrap();
        assert!(v.sigma_g2_hat.is_finite() && v.sigma_eps2_hat.is_finite());
    }

    #[test]
    fn moment_bookkeeping() {
        for p in grid() {
            let m = ModelMoments::new(&p);
            let mu_eps = m.innovation[0];
            assert!(((m.innovation[1] - mu_eps) - mu_eps * mu_eps / p.r).abs() < 1e-13);
            assert!((m.c2 - (1.0 - p.alpha * p.alpha) * m.marginal[1]).abs() < 1e-12);
        }
        let m = ModelMoments::new(&geo());
        assert!((m.c2 - 4.5).abs() < 1e-14);
        assert!((m.c2 - 0.5 * 0.5 * 6.0).abs() > 0.1);
    }

    fn marginal_expectation(p: &ModelParams, f: impl Fn(f64) -> f64) -> f64 {
        let law = p.marginal();
        (0..=law.truncation_point(1e-17) + 200).map(|k| law.pmf(k) * f(k as f64)).sum()
    }

    #[test]
    fn sigma_matches_sandwich_form() {
        // Φ⁻¹ W Φ⁻¹ with W = E[(σ_G² X + σ_ε²)(X,1)'(X,1)] by summation.
        for p in grid() {
            let m = ModelMoments::new(&p);
            let (sg2, se2) = (m.offspring[1], m.innovation[1]);
            let v = |x: f64| sg2 * x + se2;
            let w = [
                [marginal_expectation(&p, |x| v(x) * x * x), marginal_expectation(&p, |x| v(x) * x)],
                [marginal_expectation(&p, |x| v(x) * x), marginal_expectation(&p, v)],
            ];
            let ex2 = marginal_expectation(&p, |x| x * x);
            let s2 = ex2 - p.mu * p.mu;
            let phi_inv = [[1.0 / s2, -p.mu / s2], [-p.mu / s2, ex2 / s2]];
            let want = sandwich(&phi_inv, &w);
            let got = predicted_cov(&p).sigma_means;
            for i in 0..2 {
                for j in 0..2 {
                    assert!((got[i][j] - want[i][j]).abs() < 1e-9 * want[i][j].abs().max(1.0), "{p:?}");
                }
            }
        }
    }

    #[test]
    fn geometric_sigma_values() {
        let c = predicted_cov(&geo());
        assert!((c.sigma_means[0][0] - 64.5 / 36.0).abs() < 1e-12);
        assert!((c.sigma_means[0][1] + 84.0 / 36.0).abs() < 1e-12);
        assert!((c.sigma_means[1][1] - 240.0 / 36.0).abs() < 1e-12);
        assert!((c.sigma_vars[0][0] - 84.0).abs() < 1e-8);
        assert!((c.sigma_vars[0][1] + 108.0).abs() < 1e-8);
        assert!((c.sigma_vars[1][1] - 225.0).abs() < 1e-8);
    }

    #[test]
    fn covariances_symmetric_nonnegative_diagonal() {
        for p in grid() {
            let c = predicted_cov(&p);
            for m in [c.sigma_means, c.sigma_alpha_mu, c.sigma_vars] {
                assert!((m[0][1] - m[1][0]).abs() <= 1e-12 * m[0][1].abs().max(1.0));
                assert!(m[0][0] >= 0.0 && m[1][1] >= 0.0);
            }
        }
    }

    #[test]
    fn squared_residual_variance_matches_transition_row() {
        for p in grid() {
            let m = ModelMoments::new(&p);
            for x in [0u64, 1, 3, 7] {
                let (cm, _) = crate::process::conditional_moments(&p, x, 1);
                let (mut e2, mut e4) = (0.0, 0.0);
                for j in 0..600 {
                    let pr = transition_prob(&p, x, j, 1);
                    let u = j as f64 - cm;
                    e2 += pr * u * u;
                    e4 += pr * u.powi(4);
                }
                let want = e4 - e2 * e2;
                let got = m.squared_residual_variance(x as f64);
                assert!((got - want).abs() < 1e-8 * want.max(1.0), "{p:?} x={x} {got} vs {want}");
            }
        }
    }

    #[test]
    fn sigma1_matches_raw_moment_route() {
        for p in grid() {
            let m = ModelMoments::new(&p);
            let [c0, c1, c2] = m.squared_residual_variance_coeffs();
            let [mu, s2, m3, m4] = m.marginal;
            let raw = [
                1.0,
                mu,
                s2 + mu * mu,
                m3 + 3.0 * mu * s2 + mu.powi(3),
                m4 + 4.0 * mu * m3 + 6.0 * mu * mu * s2 + mu.powi(4),
            ];
            let e = |k: usize| c0 * raw[k] + c1 * raw[k + 1] + c2 * raw[k + 2];
            let phi_inv = [[1.0 / s2, -mu / s2], [-mu / s2, raw[2] / s2]];
            let want = sandwich(&phi_inv, &[[e(2), e(1)], [e(1), e(0)]]);
            let got = predicted_cov(&p).sigma_vars;
            for i in 0..2 {
                for j in 0..2 {
                    assert!((got[i][j] - want[i][j]).abs() < 1e-8 * want[i][j].abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn loglik_single_transition() {
        let ll = loglik(&Series::new(vec![1, 1]), &geo()).unwrap();
        assert!((ll.value - 0.25f64.ln()).abs() < 1e-14);
        assert_eq!(ll.underflows, 0);
        assert!(loglik(&Series::new(vec![3]), &geo()).is_err());
    }

    #[test]
    fn loglik_matches_direct_sum() {
        let p = ModelParams::new(0.4, 3.0, 1.7).unwrap();
        let s = sim(&p, 200, 17);
        let direct: f64 = s.values.windows(2).map(|w| transition_prob(&p, w[0], w[1], 1).ln()).sum();
        assert!((loglik(&s, &p).unwrap().value - direct).abs() < 1e-9);
    }

    #[test]
    fn loglik_floors_underflow() {
        let p = ModelParams::new(0.1, 0.5, 50.0).unwrap();
        let ll = loglik(&Series::new(vec![0, 400, 0]), &p).unwrap();
        assert!(ll.underflows >= 1);
        assert!(ll.value.is_finite());
    }

    #[test]
    fn cml_start_at_truth_never_worse() {
        let p = geo();
        let s = sim(&p, 500, 3);
        let at_truth = loglik(&s, &p).unwrap().value;
        let fit = cml_fit(&s, Some(p)).unwrap();
        assert!(fit.loglik >= at_truth - 1e-6);
        assert!(fit.converged);
    }

    #[test]
    fn cml_recovers_parameters() {
        let p = ModelParams::new(0.5, 2.0, 1.0).unwrap();
        let s = sim(&p, 3000, 21);
        let fit = cml_fit(&s, None).unwrap();
        assert!(fit.converged);
        assert!((fit.params.alpha - 0.5).abs() < 0.08);
        assert!((fit.params.mu - 2.0).abs() < 0.3);
        assert!(fit.params.r > 0.6 && fit.params.r < 1.6);
    }

    #[test]
    fn cml_default_init_fallback() {
        let init = cml_default_init(&Series::new(vec![2; 12])).unwrap();
        assert_eq!(init, ModelParams { alpha: 0.5, mu: 2.0, r: 1.0 });
        assert!(cml_default_init(&Series::new(vec![0; 12])).is_err());
    }

    #[test]
    fn report_fields_by_method() {
        let s = Series::new(vec![1, 2, 1, 2, 1]);
        let r = estimate(&s, EstimationMethod::Cls, None).unwrap();
        assert_eq!(r.alpha_hat, Some(-1.0));
        assert!(!r.in_range);
        assert!(r.cov_means.is_none());

        let s = sim(&geo(), 2000, 5);
        let r = estimate(&s, EstimationMethod::ClsVar, None).unwrap();
        assert!(r.sigma_g2_hat.is_some() && r.cov_vars.is_some());
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["method"], "cls-var");
        assert_eq!(json["residual_mode"], "estimated-means");
        assert!("cls-var".parse::<EstimationMethod>().unwrap() == EstimationMethod::ClsVar);
        assert!("ols".parse::<EstimationMethod>().is_err());
    }
}
