//! Brute-force reference computations.
//!
//! Nothing here touches the closed-form kernels in [`crate::distributions`]
//! or the transition formulas in [`crate::process`]; these routines exist
//! so that tests and the self-check can compare the two routes.

use crate::thinning::ModelParams;

/// `(mean, m2, m3, m4)` by direct summation over `0..=k_max`.
pub fn brute_central_moments(pmf: impl Fn(u64) -> f64, k_max: u64) -> [f64; 4] {
    let probs: Vec<f64> = (0..=k_max).map(&pmf).collect();
    let mean: f64 = probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let mut out = [mean, 0.0, 0.0, 0.0];
    for (k, p) in probs.iter().enumerate() {
        let d = k as f64 - mean;
        out[1] += p * d * d;
        out[2] += p * d * d * d;
        out[3] += p * d * d * d * d;
    }
    out
}

/// Truncated convolution of two pmfs given on `0..len`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len().min(b.len());
    (0..len)
        .map(|k| (0..=k).map(|i| a[i] * b[k - i]).sum())
        .collect()
}

/// pmf of `x` iid copies summed, on `0..=k_max`.
pub fn convolution_power(pmf: impl Fn(u64) -> f64, x: u64, k_max: u64) -> Vec<f64> {
    let base: Vec<f64> = (0..=k_max).map(pmf).collect();
    let mut acc = vec![0.0; k_max as usize + 1];
    acc[0] = 1.0;
    for _ in 0..x {
        acc = convolve(&acc, &base);
    }
    acc
}

/// NB1 pmf with success probability `q` by the ratio recurrence.
pub fn nb_pmf_recurrence(r: f64, q: f64, k_max: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max as usize + 1);
    let mut p = q.powf(r);
    out.push(p);
    for k in 1..=k_max {
        p *= (1.0 - q) * (k as f64 - 1.0 + r) / k as f64;
        out.push(p);
    }
    out
}

/// h-step transition row `P(X_{t+h} = j | X_t = i)`, `j = 0..=j_max`, by
/// convolving `i` offspring pmfs of the h-fold operator with the
/// accumulated innovation.
///
/// The h-fold offspring pmf is read off its pgf
/// `1 - α^h q_h (1-s) / (1 - (1-q_h)s)`.
pub fn transition_row_by_convolution(p: &ModelParams, i: u64, h: u32, j_max: u64) -> Vec<f64> {
    let alpha_h = p.alpha.powi(h as i32);
    let q_h = p.r / (p.r + (1.0 - alpha_h) * p.mu);
    let b = alpha_h * q_h;
    let offspring = |k: u64| {
        if k == 0 {
            1.0 - b
        } else {
            b * q_h * (1.0 - q_h).powi(k as i32 - 1)
        }
    };
    let thinned = convolution_power(offspring, i, j_max);
    let innovation = nb_pmf_recurrence(p.r, q_h, j_max);
    convolve(&thinned, &innovation)
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, m| acc * (n - m) as f64 / (m + 1) as f64)
}

/// Transition probability of the geometric (`r = 1`) model, coded
/// directly from its own kernels `A_i^(n)(y) = C(n,i) y^i (1-y)^(n-i)` and
/// `B_l^(n)(y) = C(n-1,l-1) y^l (1-y)^(n-l)`.
pub fn geometric_transition(alpha: f64, mu: f64, i: u64, j: u64, h: u32) -> f64 {
    let q = 1.0 / (1.0 + (1.0 - alpha.powi(h as i32)) * mu);
    let a = |n: u64, k: u64, y: f64| binomial(n, k) * y.powi(k as i32) * (1.0 - y).powi((n - k) as i32);
    let b = |n: u64, l: u64, y: f64| binomial(n - 1, l - 1) * y.powi(l as i32) * (1.0 - y).powi((n - l) as i32);
    if i == 0 {
        return q * (1.0 - q).powi(j as i32);
    }
    let ah = alpha.powi(h as i32) * q;
    let mut total = a(i, 0, ah) * b(j + 1, 1, q);
    for k in 1..=j {
        let inner: f64 = (1..=i.min(k)).map(|l| a(i, l, ah) * b(k, l, q)).sum();
        total += b(j - k + 1, 1, q) * inner;
    }
    total
}

/// `Σ_k pmf(k) s^k` over `0..=k_max`.
pub fn pgf_series(pmf: impl Fn(u64) -> f64, s: f64, k_max: u64) -> f64 {
    (0..=k_max).map(|k| pmf(k) * s.powi(k as i32)).sum()
}

/// Total variation distance between an empirical sample and a pmf, with
/// everything above `support` pooled into one cell.
pub fn total_variation(samples: &[u64], pmf: impl Fn(u64) -> f64, support: u64) -> f64 {
    let mut counts = vec![0usize; support as usize + 1];
    let mut outside = 0usize;
    for &x in samples {
        match counts.get_mut(x as usize) {
            Some(c) => *c += 1,
            None => outside += 1,
        }
    }
    let n = samples.len() as f64;
    let mut tv = 0.0;
    let mut mass = 0.0;
    for (k, &c) in counts.iter().enumerate() {
        let p = pmf(k as u64);
        mass += p;
        tv += (c as f64 / n - p).abs();
    }
    tv += (outside as f64 / n - (1.0 - mass).max(0.0)).abs();
    tv / 2.0
}
