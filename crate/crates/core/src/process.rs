//! The stationary NB-INAR(1) chain: simulation, transition laws,
//! conditional moments and generating functions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{coeff_a_unchecked, ln_coeff_b};
use crate::error::{Error, Result};
use crate::special::ln_choose;
use crate::thinning::ModelParams;

/// Largest state bound accepted by [`transition_table`].
pub const MAX_TABLE_STATE: usize = 5000;

/// Tail level used to pick a default table bound.
pub const TABLE_TAIL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub seed: Option<u64>,
    pub params: Option<ModelParams>,
    pub mode: String,
}

/// Time-ordered non-negative counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub values: Vec<u64>,
    #[serde(default)]
    pub meta: Option<SeriesMeta>,
}

impl Series {
    pub fn new(values: Vec<u64>) -> Self {
        Self { values, meta: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&x| x as f64).sum::<f64>() / self.values.len() as f64
    }

    /// Sample autocorrelation at `lag` with the usual full-length
    /// denominator.
    pub fn autocorrelation(&self, lag: usize) -> f64 {
        let mean = self.mean();
        let d: Vec<f64> = self.values.iter().map(|&x| x as f64 - mean).collect();
        let denom: f64 = d.iter().map(|v| v * v).sum();
        if lag == 0 {
            return 1.0;
        }
        let num: f64 = d.iter().zip(&d[lag.min(d.len())..]).map(|(a, b)| a * b).sum();
        num / denom
    }

    /// Counts `C[i][j]` of transitions `i -> j` among states `<= max_state`.
    pub fn transition_counts(&self, max_state: usize) -> Vec<Vec<u64>> {
        let mut counts = vec![vec![0u64; max_state + 1]; max_state + 1];
        for w in self.values.windows(2) {
            let (i, j) = (w[0] as usize, w[1] as usize);
            if i <= max_state && j <= max_state {
                counts[i][j] += 1;
            }
        }
        counts
    }
}

/// Simulates `n` consecutive values started from the stationary law.
pub fn simulate<R: Rng + ?Sized>(p: &ModelParams, n: usize, rng: &mut R) -> Series {
    let marginal = p.marginal();
    let innovation = p.innovation();
    let offspring = p.offspring();
    let mut values = Vec::with_capacity(n);
    if n == 0 {
        return Series::new(values);
    }
    let mut x = marginal.sample(rng);
    values.push(x);
    for _ in 1..n {
        x = offspring.sample_sum(x, rng) + innovation.sample(rng);
        values.push(x);
    }
    Series::new(values)
}

/// `P(X_{t+h} = j | X_t = i)`.
///
/// Row 0 is the accumulated innovation `B_r^(j+r)(q̃_h)`. For `i >= 1`,
/// `A_0^(i)(α^h q̃_h) B_r^(j+r)(q̃_h) + Σ_{k=1}^{j} B_r^(j-k+r)(q̃_h)
/// Σ_{l=1}^{min(i,k)} A_l^(i)(α^h q̃_h) B_l^(k)(q̃_h)`.
pub fn transition_prob(p: &ModelParams, i: u64, j: u64, h: u32) -> f64 {
    let hf = p.h_fold(h);
    let q = hf.q_tilde_h;
    let b = hf.alpha_h * q;
    let r = p.r;
    let innovation = |m: u64| ln_coeff_b(m as f64 + r, r, q).exp();
    if i == 0 {
        return innovation(j);
    }
    let mut total = coeff_a_unchecked(i, 0, b) * innovation(j);
    for k in 1..=j {
        let inner: f64 = (1..=i.min(k))
            .map(|l| coeff_a_unchecked(i, l, b) * ln_coeff_b(k as f64, l as f64, q).exp())
            .sum();
        total += innovation(j - k) * inner;
    }
    total
}

/// Precomputed kernels for evaluating many transition probabilities of one
/// `(params, h)` pair over states `0..=max_state`.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    max_state: usize,
    thin_beta: f64,
    // B_l^(k)(q̃_h), row k, column l
    b_kernel: Vec<Vec<f64>>,
    innovation: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(p: &ModelParams, h: u32, max_state: usize) -> Self {
        let hf = p.h_fold(h);
        let q = hf.q_tilde_h;
        let (ln_q, ln_1q) = (q.ln(), (-q).ln_1p());
        let b_kernel = (0..=max_state)
            .map(|k| {
                let mut row = vec![0.0; k + 1];
                for (l, slot) in row.iter_mut().enumerate().skip(1) {
                    let ln = ln_choose(k as u64 - 1, l as u64 - 1)
                        + l as f64 * ln_q
                        + (k - l) as f64 * ln_1q;
                    *slot = ln.exp();
                }
                row
            })
            .collect();
        let innovation = (0..=max_state)
            .map(|m| ln_coeff_b(m as f64 + p.r, p.r, q).exp())
            .collect();
        Self { max_state, thin_beta: hf.alpha_h * q, b_kernel, innovation }
    }

    pub fn max_state(&self) -> usize {
        self.max_state
    }

    /// Thinned-count pmf `P((β_h,θ)⊙i = k)` for `k = 0..=max_state`.
    pub fn thinned_row(&self, i: u64) -> Vec<f64> {
        let m = self.max_state;
        let mut out = vec![0.0; m + 1];
        if i == 0 {
            out[0] = 1.0;
            return out;
        }
        let b = self.thin_beta;
        let top = (i as usize).min(m);
        let a: Vec<f64> = (0..=top).map(|l| coeff_a_unchecked(i, l as u64, b)).collect();
        out[0] = a[0];
        for (k, slot) in out.iter_mut().enumerate().skip(1) {
            let bk = &self.b_kernel[k];
            *slot = (1..=k.min(top)).map(|l| a[l] * bk[l]).sum();
        }
        out
    }

    /// Full row `P(X_{t+h} = j | X_t = i)` for `j = 0..=max_state`.
    pub fn row(&self, i: u64) -> Vec<f64> {
        let thinned = self.thinned_row(i);
        (0..=self.max_state)
            .map(|j| (0..=j).map(|k| thinned[k] * self.innovation[j - k]).sum())
            .collect()
    }
}

/// Dense truncated h-step transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub h: u32,
    pub max_state: usize,
    pub probs: Vec<Vec<f64>>,
    /// Probability of leaving `0..=max_state`, per row.
    pub tail_mass: Vec<f64>,
}

impl TransitionTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i][j]
    }

    /// Truncated matrix product, used for Chapman–Kolmogorov checks.
    pub fn compose(&self, other: &TransitionTable) -> Vec<Vec<f64>> {
        let m = self.max_state.min(other.max_state);
        (0..=m)
            .map(|i| {
                (0..=m)
                    .map(|j| (0..=m).map(|k| self.probs[i][k] * other.probs[k][j]).sum())
                    .collect()
            })
            .collect()
    }
}

/// Default table bound: twice the NB(r, μ) truncation point at 1e-12.
pub fn default_max_state(p: &ModelParams) -> usize {
    2 * p.marginal().truncation_point(TABLE_TAIL_EPS) as usize
}

pub fn transition_table(p: &ModelParams, max_state: usize, h: u32) -> Result<TransitionTable> {
    if max_state > MAX_TABLE_STATE {
        return Err(Error::TableTooLarge { requested: max_state, limit: MAX_TABLE_STATE });
    }
    let kernel = TransitionKernel::new(p, h, max_state);
    let probs: Vec<Vec<f64>> = (0..=max_state as u64).map(|i| kernel.row(i)).collect();
    let tail_mass = probs
        .iter()
        .map(|row| (1.0 - row.iter().sum::<f64>()).max(0.0))
        .collect();
    Ok(TransitionTable { h, max_state, probs, tail_mass })
}

/// `max |P^(a+b)_ij - Σ_k P^(a)_ik P^(b)_kj|` over `i, j ≤ max_state`.
///
/// The inner sum runs over `k ≤ max(4 max_state, default_max_state)` so that
/// rows near the boundary are not penalized for mass the truncation drops.
pub fn chapman_kolmogorov_residual(p: &ModelParams, max_state: usize, a: u32, b: u32) -> f64 {
    let inner = (4 * max_state).max(default_max_state(p));
    let first = TransitionKernel::new(p, a, inner);
    let second = TransitionKernel::new(p, b, max_state);
    let direct = TransitionKernel::new(p, a + b, max_state);
    let second_rows: Vec<Vec<f64>> = (0..=inner as u64).map(|k| second.row(k)).collect();
    let mut worst = 0.0f64;
    for i in 0..=max_state as u64 {
        let left = first.row(i);
        let want = direct.row(i);
        for j in 0..=max_state {
            let composed: f64 = left.iter().zip(&second_rows).map(|(l, row)| l * row[j]).sum();
            worst = worst.max((composed - want[j]).abs());
        }
    }
    worst
}

/// `(E[X_{t+h} | X_t = x], Var[X_{t+h} | X_t = x])`.
pub fn conditional_moments(p: &ModelParams, x: u64, h: u32) -> (f64, f64) {
    let alpha_h = p.alpha.powi(h as i32);
    let rest = 1.0 - alpha_h;
    let xf = x as f64;
    let mean = alpha_h * xf + p.mu * rest;
    let var = (2.0 * p.mu / p.r + 1.0) * alpha_h * rest * xf + p.mu * rest * (1.0 + rest * p.mu / p.r);
    (mean, var)
}

/// `(1 - α^h q̃_h (1-s)/(1-(1-q̃_h)s))^x · (q̃_h / (1-(1-q̃_h)s))^r`.
pub fn conditional_pgf(p: &ModelParams, x: u64, h: u32, s: f64) -> f64 {
    let hf = p.h_fold(h);
    let q = hf.q_tilde_h;
    let denom = 1.0 - (1.0 - q) * s;
    let thin = 1.0 - hf.alpha_h * q * (1.0 - s) / denom;
    thin.powf(x as f64) * (q / denom).powf(p.r)
}

/// Joint pgf of `(X_t, X_{t+1})`; symmetric in its arguments.
pub fn joint_pgf(p: &ModelParams, s1: f64, s2: f64) -> f64 {
    let (r, mu, a) = (p.r, p.mu, p.alpha);
    let abar_mu = (1.0 - a) * mu;
    let inner = (r + mu) * (r + abar_mu) - abar_mu * (r + mu) * (s1 + s2) + mu * (abar_mu - r * a) * s1 * s2;
    (inner / (r * r)).powf(-r)
}

/// `ρ_k = α^k`, with `ρ_0 = 1`.
pub fn autocorrelation(p: &ModelParams, k: u32) -> f64 {
    p.alpha.powi(k as i32)
}

/// One draw of `Σ_{j=0}^{J} (β_j, θ)⊙ε_j` with independent innovations and
/// `β_0 = 1`.
pub fn ma_sample<R: Rng + ?Sized>(p: &ModelParams, truncation: u32, rng: &mut R) -> u64 {
    let innovation = p.innovation();
    (0..=truncation)
        .map(|j| {
            let eps = innovation.sample(rng);
            p.h_fold(j).offspring().sample_sum(eps, rng)
        })
        .sum()
}

/// `Π_{j=0}^{J} Ψ_ε(Ψ_{β_j,θ}(s))`, the pgf of the truncated MA(∞) sum.
pub fn ma_pgf(p: &ModelParams, truncation: u32, s: f64) -> f64 {
    let innovation = p.innovation();
    (0..=truncation)
        .map(|j| innovation.pgf(p.h_fold(j).offspring().pgf(s)))
        .product()
}
