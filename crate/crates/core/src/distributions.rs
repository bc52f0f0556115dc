//! Negative binomial and shifted geometric laws, plus the binomial-type
//! kernels `A` and `B` that every transition formula is assembled from.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special::{ln_choose, ln_gamma};

/// Tail tolerance used when a negative binomial support must be truncated.
pub const NB_TAIL_EPS: f64 = 1e-14;

/// Negative binomial law NB(r, μ): shape `r`, mean `μ`.
///
/// The equivalent NB1(r, θ) form uses `θ = μ / (μ + r)`, with pmf
/// `Γ(k+r) / (k! Γ(r)) · (1-θ)^r θ^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    r: f64,
    mu: f64,
}

impl NbParams {
    pub fn new(r: f64, mu: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return domain(format!("negative binomial shape r must be positive, got {r}"));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return domain(format!("negative binomial mean must be positive, got {mu}"));
        }
        Ok(Self { r, mu })
    }

    /// Builds the law from its NB1 form.
    pub fn from_nb1(r: f64, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return domain(format!("NB1 theta must lie in (0,1), got {theta}"));
        }
        Self::new(r, r * theta / (1.0 - theta))
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn theta(&self) -> f64 {
        self.mu / (self.mu + self.r)
    }

    /// `1 - θ = r / (μ + r)`, computed without cancellation.
    pub fn theta_bar(&self) -> f64 {
        self.r / (self.mu + self.r)
    }

    pub fn variance(&self) -> f64 {
        self.mu * (self.mu / self.r + 1.0)
    }

    pub fn ln_pmf(&self, k: u64) -> f64 {
        let kf = k as f64;
        ln_gamma(kf + self.r) - ln_gamma(self.r) - ln_gamma(kf + 1.0)
            + self.r * self.theta_bar().ln()
            + kf * self.theta().ln()
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.ln_pmf(k).exp()
    }

    /// `(1 + μ(1-s)/r)^(-r)`.
    pub fn pgf(&self, s: f64) -> f64 {
        (1.0 + self.mu * (1.0 - s) / self.r).powf(-self.r)
    }

    /// The same pgf written in NB1 form, `((1-θ)/(1-θs))^r`.
    pub fn pgf_nb1(&self, s: f64) -> f64 {
        (self.theta_bar() / (1.0 - self.theta() * s)).powf(self.r)
    }

    /// `(mean, m2, m3, m4)` with `m_k` the k-th central moment.
    pub fn central_moments(&self) -> [f64; 4] {
        let mu = self.mu;
        let rinv = 1.0 / self.r;
        let m2 = mu * (mu * rinv + 1.0);
        let m3 = m2 * (2.0 * mu * rinv + 1.0);
        let m4 = m2 * (1.0 + 3.0 * m2 * (1.0 + 2.0 * rinv));
        [mu, m2, m3, m4]
    }

    /// Upper bound on `P(X > k)` from geometric domination of the pmf ratio.
    ///
    /// Returns `None` while `k` sits before the point where the ratio
    /// `pmf(j+1)/pmf(j)` is bounded below one.
    pub fn tail_bound(&self, k: u64) -> Option<f64> {
        let ratio = self.ratio_bound(k)?;
        Some(self.pmf(k) * ratio / (1.0 - ratio))
    }

    /// Smallest `K` with `pmf(K) / (1 - ρ_K) < eps`, where `ρ_K` bounds every
    /// successive pmf ratio beyond `K`.
    pub fn truncation_point(&self, eps: f64) -> u64 {
        let mut k = 0u64;
        let mut ln_p = self.ln_pmf(0);
        let ln_theta = self.theta().ln();
        loop {
            if let Some(ratio) = self.ratio_bound(k) {
                if ln_p.exp() / (1.0 - ratio) < eps {
                    return k;
                }
            }
            let kf = k as f64;
            ln_p += ln_theta + ((kf + self.r) / (kf + 1.0)).ln();
            k += 1;
        }
    }

    // sup_{j >= k} θ (j + r) / (j + 1)
    fn ratio_bound(&self, k: u64) -> Option<f64> {
        let theta = self.theta();
        let rho = if self.r <= 1.0 {
            theta
        } else {
            theta * (k as f64 + self.r) / (k as f64 + 1.0)
        };
        (rho < 1.0).then_some(rho)
    }

    /// Gamma–Poisson mixture draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let gamma = Gamma::new(self.r, self.mu / self.r).expect("validated shape and scale");
        poisson_draw(gamma.sample(rng), rng)
    }
}

/// Draws a Poisson variate, treating a vanishing rate as a point mass at 0.
pub(crate) fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda.is_nan() || lambda <= 0.0 {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(p) => p.sample(rng) as u64,
        // only reachable for rates far outside any stationary regime
        Err(_) => lambda.round() as u64,
    }
}

/// Negative binomial with integer-or-real `shape` counting failures before
/// the `shape`-th success, success probability `p`. Zero shape gives 0.
pub(crate) fn nb_failures_draw<R: Rng + ?Sized>(shape: f64, p: f64, rng: &mut R) -> u64 {
    if shape <= 0.0 || p >= 1.0 {
        return 0;
    }
    let gamma = Gamma::new(shape, (1.0 - p) / p).expect("positive shape and scale");
    poisson_draw(gamma.sample(rng), rng)
}

/// Geometric law on `{1, 2, ...}`: `f_k = (1-p) p^(k-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedGeomParams {
    p: f64,
}

impl ShiftedGeomParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return domain(format!("shifted geometric p must lie in (0,1), got {p}"));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        (1.0 - self.p) * self.p.powi((k - 1) as i32)
    }

    pub fn pgf(&self, s: f64) -> f64 {
        (1.0 - self.p) * s / (1.0 - self.p * s)
    }

    /// Raw moments `E[K^m]` for `m = 1..=4`.
    pub fn raw_moments(&self) -> [f64; 4] {
        // success probability of each trial
        let c = 1.0 - self.p;
        [
            1.0 / c,
            (2.0 - c) / (c * c),
            (6.0 - 6.0 * c + c * c) / c.powi(3),
            (24.0 - 36.0 * c + 14.0 * c * c - c.powi(3)) / c.powi(4),
        ]
    }
}

/// `A_i^(n)(y) = C(n, i) y^i (1-y)^(n-i)`.
pub fn coeff_a(n: u64, i: u64, y: f64) -> Result<f64> {
    if i > n {
        return Err(Error::IndexOutOfRange(format!("A kernel needs i <= n, got i={i}, n={n}")));
    }
    check_unit_open(y)?;
    Ok(coeff_a_unchecked(n, i, y))
}

pub(crate) fn coeff_a_unchecked(n: u64, i: u64, y: f64) -> f64 {
    let (i_f, rest) = (i as f64, (n - i) as f64);
    let mut ln = ln_choose(n, i);
    if i > 0 {
        ln += i_f * y.ln();
    }
    if n > i {
        ln += rest * (-y).ln_1p();
    }
    ln.exp()
}

/// `B_l^(n)(y) = Γ(n) / (Γ(l) Γ(n-l+1)) · y^l (1-y)^(n-l)` for real `n >= l > 0`.
///
/// For integer arguments this is `C(n-1, l-1) y^l (1-y)^(n-l)`. With
/// `n = k + r`, `l = r`, `y = 1 - θ` it is the NB1(r, θ) pmf at `k`.
pub fn coeff_b(n: f64, l: f64, y: f64) -> Result<f64> {
    if !(l > 0.0 && n.is_finite()) || n < l {
        return domain(format!("B kernel needs n >= l > 0, got n={n}, l={l}"));
    }
    check_unit_open(y)?;
    Ok(ln_coeff_b(n, l, y).exp())
}

pub(crate) fn ln_coeff_b(n: f64, l: f64, y: f64) -> f64 {
    let gap = n - l;
    let mut ln = ln_gamma(n) - ln_gamma(l) - ln_gamma(gap + 1.0) + l * y.ln();
    if gap > 0.0 {
        ln += gap * (-y).ln_1p();
    }
    ln
}

fn check_unit_open(y: f64) -> Result<()> {
    if !(y > 0.0 && y < 1.0) {
        return domain(format!("kernel argument must lie in (0,1), got {y}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nb(r: f64, mu: f64) -> NbParams {
        NbParams::new(r, mu).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(matches!(NbParams::new(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(NbParams::new(1.0, -2.0), Err(Error::Domain(_))));
        assert!(NbParams::new(f64::NAN, 1.0).is_err());
        assert!(ShiftedGeomParams::new(1.0).is_err());
    }

    #[test]
    fn pmf_at_zero_geometric() {
        assert!((nb(1.0, 2.0).pmf(0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pmf_normalizes() {
        let total: f64 = (0..=200).map(|k| nb(1.0, 2.0).pmf(k)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_matches_ratio_recurrence() {
        let law = nb(2.5, 4.0);
        let theta = law.theta();
        let mut p = law.theta_bar().powf(2.5);
        for k in 1..=3u64 {
            p *= theta * (k as f64 - 1.0 + 2.5) / k as f64;
        }
        assert!((law.pmf(3) - p).abs() / p < 1e-13);
    }

    #[test]
    fn pgf_forms_agree_and_match_series() {
        let law = nb(1.0, 2.0);
        assert_eq!(law.pgf(1.0), 1.0);
        assert!((law.pgf(0.0) - 1.0 / 3.0).abs() < 1e-15);

        let law = nb(2.0, 3.0);
        let mut series = 0.0;
        let mut k = 0;
        loop {
            let term = law.pmf(k) * 0.5f64.powi(k as i32);
            series += term;
            if term < 1e-17 {
                break;
            }
            k += 1;
        }
        assert!((law.pgf(0.5) - series).abs() < 1e-14);
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            assert!((law.pgf(s) - law.pgf_nb1(s)).abs() < 1e-14);
        }
    }

    #[test]
    fn central_moments_geometric() {
        let m = nb(1.0, 2.0).central_moments();
        let expected = [2.0, 6.0, 30.0, 330.0];
        for (a, b) in m.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn central_moments_against_pmf_sums() {
        for &r in &[0.5, 1.0, 2.5] {
            for &mu in &[0.5, 2.0, 5.0] {
                let law = nb(r, mu);
                let k_max = law.truncation_point(1e-18) + 50;
                let mut brute = [0.0; 4];
                for k in 0..=k_max {
                    let p = law.pmf(k);
                    let d = k as f64 - mu;
                    brute[0] += p * k as f64;
                    brute[1] += p * d * d;
                    brute[2] += p * d.powi(3);
                    brute[3] += p * d.powi(4);
                }
                let closed = law.central_moments();
                for m in 0..4 {
                    let rel = (closed[m] - brute[m]).abs() / closed[m].abs();
                    assert!(rel < 1e-10, "r={r} mu={mu} m{} {} vs {}", m + 1, closed[m], brute[m]);
                }
                assert!(closed[1] > 0.0 && closed[3] >= closed[1] * closed[1]);
            }
        }
    }

    #[test]
    fn variance_from_pgf_second_derivative() {
        let law = nb(1.0, 2.0);
        let h = 1e-4;
        let d1 = (law.pgf(1.0) - law.pgf(1.0 - 2.0 * h)) / (2.0 * h);
        let f = |s: f64| law.pgf(s);
        let d2 = (f(1.0) - 2.0 * f(1.0 - h) + f(1.0 - 2.0 * h)) / (h * h);
        let var = d2 + d1 - d1 * d1;
        assert!((var - law.central_moments()[1]).abs() < 1e-2);
    }

    #[test]
    fn truncation_controls_tail() {
        for &(r, mu) in &[(0.5, 2.0), (1.0, 2.0), (2.5, 4.0), (7.0, 30.0)] {
            let law = nb(r, mu);
            let k = law.truncation_point(1e-12);
            let head: f64 = (0..=k).map(|j| law.pmf(j)).sum();
            assert!(1.0 - head < 1e-12, "r={r} mu={mu} K={k}");
            assert!(law.tail_bound(k).unwrap() < 1e-12);
        }
    }

    #[test]
    fn kernel_a_values() {
        assert!((coeff_a(1, 1, 0.25).unwrap() - 0.25).abs() < 1e-15);
        assert!((coeff_a(5, 0, 0.3).unwrap() - 0.7f64.powi(5)).abs() < 1e-15);
        assert!(matches!(coeff_a(2, 3, 0.5), Err(Error::IndexOutOfRange(_))));
        for n in 1..=50u64 {
            let total: f64 = (0..=n).map(|i| coeff_a(n, i, 0.37).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn kernel_b_values() {
        assert!((coeff_b(2.0, 1.0, 0.5).unwrap() - 0.25).abs() < 1e-15);
        let law = nb(1.0, 2.0);
        let via_b = coeff_b(0.0 + 1.0, 1.0, law.theta_bar()).unwrap();
        assert!((via_b - 1.0 / 3.0).abs() < 1e-15);
        assert!((coeff_b(2.7, 2.7, 0.4).unwrap() - 0.4f64.powf(2.7)).abs() < 1e-15);
        assert!(coeff_b(1.0, 2.0, 0.5).is_err());
        assert!(coeff_b(3.0, 1.0, 1.0).is_err());
        // integer case equals C(n-1, l-1) y^l (1-y)^(n-l)
        let direct = 10.0 * 0.3f64.powi(3) * 0.7f64.powi(3);
        assert!((coeff_b(6.0, 3.0, 0.3).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn nb_pmf_is_b_kernel() {
        for &r in &[0.5, 1.0, 2.5] {
            for &mu in &[0.5, 2.0, 5.0] {
                let law = nb(r, mu);
                for k in 0..60u64 {
                    let b = coeff_b(k as f64 + r, r, law.theta_bar()).unwrap();
                    assert!((law.pmf(k) - b).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn shifted_geometric_basics() {
        let g = ShiftedGeomParams::new(0.4).unwrap();
        assert_eq!(g.pmf(0), 0.0);
        let total: f64 = (1..200).map(|k| g.pmf(k)).sum();
        assert!((total - 1.0).abs() < 1e-14);
        let m = g.raw_moments();
        for (power, expected) in m.iter().enumerate() {
            let brute: f64 = (1..400u64)
                .map(|k| g.pmf(k) * (k as f64).powi(power as i32 + 1))
                .sum();
            assert!((brute - expected).abs() / expected < 1e-12);
        }
        assert!((g.pgf(0.5) - (1..200).map(|k| g.pmf(k) * 0.5f64.powi(k as i32)).sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn sampler_matches_pmf() {
        let law = nb(1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<u64> = (0..200_000).map(|_| law.sample(&mut rng)).collect();
        assert!(crate::oracle::total_variation(&draws, |k| law.pmf(k), 60) < 0.01);
    }

    #[test]
    fn sampler_mean_clt() {
        let law = nb(3.0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 200_000;
        let mean = (0..n).map(|_| law.sample(&mut rng) as f64).sum::<f64>() / n as f64;
        let se = (law.variance() / n as f64).sqrt();
        assert!((mean - 5.0).abs() < 3.0 * se);
    }

    #[test]
    fn sampler_degenerate_mean() {
        let law = nb(1.0, 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let zeros = (0..10_000).filter(|_| law.sample(&mut rng) == 0).count();
        assert!(zeros >= 9_999);
    }
}
