//! The negative binomial thinning operator and its linear-fractional
//! reparameterization.
//!
//! `(α, μ, r)★X = G_1 + … + G_X` where the offspring `G` has pgf
//! `1 - α(1-s) / (1 + ᾱμ(1-s)/r)`. The same law written as
//! `1 - β(1-s)/(1 - β̄θ s)` is the `(β, θ)⊙` operator; [`ModelParams`]
//! and [`AltParams`] convert between the two.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::distributions::{
    coeff_a_unchecked, ln_coeff_b, nb_failures_draw, NbParams, ShiftedGeomParams,
};
use crate::error::{domain, Result};

/// `(α, μ, r)`: thinning survival rate, stationary mean and NB shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub mu: f64,
    pub r: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, mu: f64, r: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return domain(format!("alpha must lie in (0,1), got {alpha}"));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return domain(format!("mu must be positive, got {mu}"));
        }
        if !(r.is_finite() && r > 0.0) {
            return domain(format!("r must be positive, got {r}"));
        }
        Ok(Self { alpha, mu, r })
    }

    /// Re-checks the invariants, for values that arrived through serde.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.alpha, self.mu, self.r)
    }

    /// `q̃ = r / (r + ᾱμ)`; for `r = 1` this is `q = 1 / (1 + ᾱμ)`.
    pub fn q_tilde(&self) -> f64 {
        self.r / (self.r + (1.0 - self.alpha) * self.mu)
    }

    /// Stationary marginal NB(r, μ).
    pub fn marginal(&self) -> NbParams {
        NbParams::new(self.r, self.mu).expect("validated model params")
    }

    /// Innovation law NB(r, ᾱμ).
    pub fn innovation(&self) -> NbParams {
        NbParams::new(self.r, (1.0 - self.alpha) * self.mu).expect("validated model params")
    }

    pub fn mu_eps(&self) -> f64 {
        (1.0 - self.alpha) * self.mu
    }

    pub fn to_odot(&self) -> AltParams {
        star_to_odot(self)
    }

    /// The one-step offspring law `G`.
    pub fn offspring(&self) -> Offspring {
        let alt = self.to_odot();
        Offspring { beta: alt.beta, theta: alt.theta }
    }

    /// Offspring pgf in the `(α, μ, r)` form.
    pub fn g_pgf(&self, s: f64) -> f64 {
        let u = 1.0 - s;
        1.0 - self.alpha * u / (1.0 + (1.0 - self.alpha) * self.mu * u / self.r)
    }

    pub fn g_pmf(&self, k: u64) -> f64 {
        self.offspring().pmf(k)
    }

    pub fn g_central_moments(&self) -> [f64; 4] {
        self.offspring().central_moments()
    }

    pub fn h_fold(&self, h: u32) -> HFoldParams {
        h_fold(self, h)
    }

    /// `P((α, μ, r)★...★ X = k | X = x)` with `h` compositions.
    pub fn thin_conditional_pmf(&self, x: u64, h: u32, k: u64) -> f64 {
        self.h_fold(h).offspring().sum_pmf(x, k)
    }

    /// One draw of `(α, μ, r)★x`.
    pub fn thin_sample<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> u64 {
        self.offspring().sample_sum(x, rng)
    }
}

/// `(β, θ, r)`: the linear-fractional parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltParams {
    pub beta: f64,
    pub theta: f64,
    pub r: f64,
}

impl AltParams {
    pub fn new(beta: f64, theta: f64, r: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return domain(format!("beta must lie in (0,1), got {beta}"));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return domain(format!("theta must lie in (0,1), got {theta}"));
        }
        if !(r.is_finite() && r > 0.0) {
            return domain(format!("r must be positive, got {r}"));
        }
        Ok(Self { beta, theta, r })
    }

    pub fn to_star(&self) -> ModelParams {
        odot_to_star(self)
    }
}

/// `β = αr / (r + ᾱμ)`, `θ = μ / (μ + r)`.
pub fn star_to_odot(p: &ModelParams) -> AltParams {
    AltParams {
        beta: p.alpha * p.r / (p.r + (1.0 - p.alpha) * p.mu),
        theta: p.mu / (p.mu + p.r),
        r: p.r,
    }
}

/// `α = β / (1 - β̄θ)`, `μ = θr / θ̄`.
pub fn odot_to_star(p: &AltParams) -> ModelParams {
    ModelParams {
        alpha: p.beta / (1.0 - (1.0 - p.beta) * p.theta),
        mu: p.theta * p.r / (1.0 - p.theta),
        r: p.r,
    }
}

/// Offspring law with pgf `1 - β(1-s)/(1 - β̄θs)`.
///
/// It is a mixture: 0 with probability `1-β`, otherwise a geometric on
/// `{1, 2, ...}` with success probability `1 - β̄θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offspring {
    pub beta: f64,
    pub theta: f64,
}

impl Offspring {
    /// The `(α, θ)★` form with pgf `(ᾱ - (θ-α)s) / (1 - αθ - ᾱθs)`;
    /// maps to `β = αθ̄ / (1 - αθ)`.
    pub fn from_alpha_theta(alpha: f64, theta: f64) -> Self {
        Self { beta: alpha * (1.0 - theta) / (1.0 - alpha * theta), theta }
    }

    /// Success probability `1 - β̄θ` of the nonzero part.
    pub fn continue_success(&self) -> f64 {
        1.0 - (1.0 - self.beta) * self.theta
    }

    pub fn mean(&self) -> f64 {
        self.beta / self.continue_success()
    }

    pub fn pgf(&self, s: f64) -> f64 {
        1.0 - self.beta * (1.0 - s) / (1.0 - (1.0 - self.beta) * self.theta * s)
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 1.0 - self.beta;
        }
        let p = self.continue_success();
        self.beta * p * (1.0 - p).powi((k - 1) as i32)
    }

    /// Central moments from the zero/shifted-geometric mixture.
    pub fn central_moments(&self) -> [f64; 4] {
        let fail = (1.0 - self.beta) * self.theta;
        let raw = if fail > 0.0 {
            ShiftedGeomParams::new(fail).expect("fail in (0,1)").raw_moments()
        } else {
            [1.0; 4]
        };
        let [e1, e2, e3, e4] = raw.map(|m| self.beta * m);
        let m = e1;
        let m2 = e2 - m * m;
        let m3 = e3 - 3.0 * m * e2 + 2.0 * m.powi(3);
        let m4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        [m, m2, m3, m4]
    }

    /// `P(G_1 + … + G_x = k)`.
    ///
    /// Closed form `Σ_{i=1}^{min(k,x)} A_i^(x)(β) B_i^(k)(1 - β̄θ)`, with
    /// `(1-β)^x` at `k = 0`.
    pub fn sum_pmf(&self, x: u64, k: u64) -> f64 {
        if x == 0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if k == 0 {
            return (1.0 - self.beta).powf(x as f64);
        }
        let y = self.continue_success();
        let mut total = 0.0;
        for i in 1..=k.min(x) {
            let b = ln_coeff_b(k as f64, i as f64, y);
            if b < UNDERFLOW_LN {
                continue;
            }
            total += coeff_a_unchecked(x, i, self.beta) * b.exp();
        }
        total
    }

    /// Draws `G_1 + … + G_x`: `N ~ Bin(x, β)` nonzero offspring, each adding
    /// one plus geometric extras, so the total is `N + NB(N, 1-β̄θ)`.
    pub fn sample_sum<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> u64 {
        if x == 0 {
            return 0;
        }
        let active = Binomial::new(x, self.beta).expect("beta in [0,1]").sample(rng);
        active + nb_failures_draw(active as f64, self.continue_success(), rng)
    }
}

const UNDERFLOW_LN: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// Parameters of the `h`-fold composed operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HFoldParams {
    pub h: u32,
    pub alpha_h: f64,
    /// `r / (r + (1-α^h)μ)`
    pub q_tilde_h: f64,
    pub beta_h: f64,
    pub theta: f64,
    pub r: f64,
}

impl HFoldParams {
    pub fn offspring(&self) -> Offspring {
        Offspring { beta: self.beta_h, theta: self.theta }
    }

    /// Innovation accumulated over `h` steps: NB(r, (1-α^h)μ), i.e. NB1
    /// with success probability `q̃_h`.
    pub fn accumulated_innovation(&self) -> NbParams {
        NbParams::from_nb1(self.r, 1.0 - self.q_tilde_h).expect("q_tilde_h in (0,1)")
    }
}

/// Composition of `h` thinning steps; `h = 0` is the identity (`β_0 = 1`).
///
/// `β_h = β^h θ̄ / ((1-β̄θ)^h - β^h θ)` is evaluated in log space; once
/// `h·ln α < -30` the bridge identity `β_h = α^h q̃_h` is used instead.
pub fn h_fold(p: &ModelParams, h: u32) -> HFoldParams {
    let alt = p.to_odot();
    let hf = h as f64;
    let ln_alpha_h = hf * p.alpha.ln();
    let alpha_h = ln_alpha_h.exp();
    let one_minus_alpha_h = -ln_alpha_h.exp_m1();
    let q_tilde_h = p.r / (p.r + one_minus_alpha_h * p.mu);

    let beta_h = if h == 0 {
        1.0
    } else if h == 1 {
        alt.beta
    } else if ln_alpha_h < -30.0 {
        alpha_h * q_tilde_h
    } else {
        let ln_beta = alt.beta.ln();
        let ln_success = (1.0 - (1.0 - alt.beta) * alt.theta).ln();
        // (1-β̄θ)^h - β^h θ = (1-β̄θ)^h (1 - (β/(1-β̄θ))^h θ)
        let ln_denominator = hf * ln_success + (-(hf * (ln_beta - ln_success)).exp() * alt.theta).ln_1p();
        (hf * ln_beta + (1.0 - alt.theta).ln() - ln_denominator).exp()
    };

    HFoldParams { h, alpha_h, q_tilde_h, beta_h, theta: alt.theta, r: p.r }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geo() -> ModelParams {
        ModelParams::new(0.5, 2.0, 1.0).unwrap()
    }

    fn grid() -> Vec<ModelParams> {
        let mut out = Vec::new();
        for &alpha in &[0.2, 0.5, 0.85] {
            for &(mu, r) in &[(0.7, 0.5), (2.0, 1.0), (6.0, 3.5)] {
                out.push(ModelParams::new(alpha, mu, r).unwrap());
            }
        }
        out
    }

    #[test]
    fn reparameterization_hand_values() {
        let alt = star_to_odot(&geo());
        assert!((alt.beta - 0.25).abs() < 1e-15);
        assert!((alt.theta - 2.0 / 3.0).abs() < 1e-15);
        let back = odot_to_star(&AltParams::new(0.25, 2.0 / 3.0, 1.0).unwrap());
        assert!((back.alpha - 0.5).abs() < 1e-15);
        assert!((back.mu - 2.0).abs() < 1e-14);
    }

    #[test]
    fn reparameterization_limits() {
        let near_one = ModelParams::new(1.0 - 1e-12, 2.0, 1.0).unwrap();
        assert!((near_one.to_odot().beta - near_one.alpha).abs() < 1e-11);
        let near_binomial = odot_to_star(&AltParams::new(0.3, 1e-12, 1.0).unwrap());
        assert!((near_binomial.alpha - 0.3).abs() < 1e-11);
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(ModelParams::new(1.5, 2.0, 1.0).is_err());
        assert!(ModelParams::new(0.5, 0.0, 1.0).is_err());
        assert!(AltParams::new(0.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn g_pmf_geometric_case() {
        let p = geo();
        assert!((p.g_pmf(0) - 0.75).abs() < 1e-15);
        assert!((p.g_pmf(2) - 0.0625).abs() < 1e-15);
        // matches the r = 1 display (αq) q q̄^(k-1)
        let q = p.q_tilde();
        for k in 1..20u64 {
            let display = p.alpha * q * q * (1.0 - q).powi(k as i32 - 1);
            assert!((p.g_pmf(k) - display).abs() < 1e-15);
        }
        let total: f64 = (0..200).map(|k| p.g_pmf(k)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn g_pgf_two_forms_agree() {
        for p in grid() {
            let off = p.offspring();
            for i in 0..=10 {
                let s = i as f64 / 10.0;
                assert!((p.g_pgf(s) - off.pgf(s)).abs() < 1e-14, "{p:?} s={s}");
            }
            assert!((p.g_pgf(1.0) - 1.0).abs() < 1e-15);
            let h = 1e-6;
            let slope = (p.g_pgf(1.0) - p.g_pgf(1.0 - h)) / h;
            assert!((slope - p.alpha).abs() < 1e-5);
        }
        let p = geo();
        assert!((p.g_pgf(0.0) - 0.75).abs() < 1e-15);
        let series: f64 = (0..200).map(|k| p.g_pmf(k) * 0.5f64.powi(k as i32)).sum();
        assert!((p.g_pgf(0.5) - series).abs() < 1e-15);
    }

    #[test]
    fn alpha_theta_form_is_the_same_operator() {
        for &(alpha, theta) in &[(0.3, 0.2), (0.6, 0.75), (0.9, 0.5)] {
            let off = Offspring::from_alpha_theta(alpha, theta);
            for i in 0..=10 {
                let s = i as f64 / 10.0;
                let direct = ((1.0 - alpha) - (theta - alpha) * s)
                    / (1.0 - alpha * theta - (1.0 - alpha) * theta * s);
                assert!((off.pgf(s) - direct).abs() < 1e-14);
            }
            assert!((off.mean() - alpha).abs() < 1e-14);
        }
    }

    #[test]
    fn g_moments_hand_and_brute_force() {
        let m = geo().g_central_moments();
        assert!((m[0] - 0.5).abs() < 1e-15);
        assert!((m[1] - 1.25).abs() < 1e-14);
        assert!((m[2] - 4.5).abs() < 1e-13);
        for p in grid() {
            let closed = p.g_central_moments();
            let brute = oracle::brute_central_moments(|k| p.g_pmf(k), 4000);
            for i in 0..4 {
                assert!(
                    (closed[i] - brute[i]).abs() / closed[i].abs().max(1e-12) < 1e-10,
                    "{p:?} m{} {} vs {}",
                    i + 1,
                    closed[i],
                    brute[i]
                );
            }
            let var = p.alpha * (1.0 - p.alpha) * (2.0 * p.mu / p.r + 1.0);
            assert!((closed[1] - var).abs() < 1e-13);
        }
        // binomial thinning limit
        let off = Offspring { beta: 0.4, theta: 1e-12 };
        assert!((off.central_moments()[1] - 0.24).abs() < 1e-10);
    }

    #[test]
    fn h_fold_hand_values_and_bridge() {
        let hf = geo().h_fold(2);
        assert!((hf.beta_h - 0.1).abs() < 1e-15);
        assert!((hf.q_tilde_h - 0.4).abs() < 1e-15);
        let one = geo().h_fold(1);
        assert_eq!(one.beta_h, geo().to_odot().beta);
        assert!((one.q_tilde_h - geo().q_tilde()).abs() < 1e-16);
        assert_eq!(one.alpha_h, 0.5);

        for p in grid() {
            let mut prev = f64::INFINITY;
            for h in 1..=80 {
                let hf = p.h_fold(h);
                assert!((hf.beta_h - hf.alpha_h * hf.q_tilde_h).abs() < 1e-13);
                assert!(((1.0 - (1.0 - hf.beta_h) * hf.theta) - hf.q_tilde_h).abs() < 1e-13);
                assert!(hf.beta_h < prev);
                prev = hf.beta_h;
            }
            assert!(prev < 1e-5);
        }
    }

    #[test]
    fn h_fold_semigroup() {
        for p in grid() {
            let base = p.offspring();
            for h in 1..=6 {
                let cur = p.h_fold(h).offspring();
                let next = p.h_fold(h + 1).offspring();
                for i in 0..=20 {
                    let s = i as f64 / 20.0;
                    assert!((base.pgf(cur.pgf(s)) - next.pgf(s)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conditional_pmf_hand_values() {
        let p = geo();
        assert!((p.thin_conditional_pmf(1, 1, 0) - 0.75).abs() < 1e-15);
        assert!((p.thin_conditional_pmf(1, 1, 3) - 0.03125).abs() < 1e-15);
        assert_eq!(p.thin_conditional_pmf(0, 1, 0), 1.0);
        assert_eq!(p.thin_conditional_pmf(0, 3, 2), 0.0);
    }

    #[test]
    fn conditional_pmf_matches_convolution() {
        for p in grid() {
            for h in 1..=3 {
                let g = p.h_fold(h).offspring();
                for x in 0..=5u64 {
                    let brute = oracle::convolution_power(|k| g.pmf(k), x, 40);
                    for (k, want) in brute.iter().enumerate() {
                        let got = p.thin_conditional_pmf(x, h, k as u64);
                        assert!((got - want).abs() < 1e-12, "{p:?} x={x} h={h} k={k}");
                    }
                }
            }
        }
    }

    #[test]
    fn conditional_pmf_normalizes() {
        for p in grid() {
            for h in 1..=5 {
                for x in 0..=20u64 {
                    let mut total = 0.0;
                    let mut k = 0;
                    loop {
                        let v = p.thin_conditional_pmf(x, h, k);
                        total += v;
                        if k > x * 2 && v < 1e-18 {
                            break;
                        }
                        k += 1;
                    }
                    assert!((total - 1.0).abs() < 1e-10, "{p:?} x={x} h={h}");
                }
            }
        }
    }

    #[test]
    fn thinning_sampler() {
        let p = geo();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!((0..100).all(|_| p.thin_sample(0, &mut rng) == 0));

        let draws: Vec<u64> = (0..200_000).map(|_| p.thin_sample(3, &mut rng)).collect();
        let tv = oracle::total_variation(&draws, |k| p.thin_conditional_pmf(3, 1, k), 60);
        assert!(tv < 0.01, "tv={tv}");

        let n = 100_000;
        let mean = (0..n).map(|_| p.thin_sample(10, &mut rng) as f64).sum::<f64>() / n as f64;
        let se = (10.0 * p.g_central_moments()[1] / n as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.5 * se, "mean={mean}");
    }
}
