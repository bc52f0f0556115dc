//! Invariant suites run by `nbinar selftest`.
//!
//! Each suite compares a closed form against an independent route on a
//! fixed parameter grid. [`Fault`] lets a caller corrupt the closed-form side
//! on purpose, which checks that the suites can actually fail.

use std::time::Instant;

use serde::Serialize;

use crate::estimation::{cls_means, ModelMoments};
use crate::oracle;
use crate::process::{
    chapman_kolmogorov_residual, default_max_state, joint_pgf, transition_prob, TransitionKernel,
};
use crate::thinning::ModelParams;

/// The parameter triples `(α, μ, r)` every suite runs on.
pub const GRID: [(f64, f64, f64); 3] = [(0.3, 1.5, 0.8), (0.5, 2.0, 1.0), (0.7, 4.0, 2.5)];

/// Deliberate corruption of the closed-form side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    /// Evaluate closed forms at `α + shift` while oracles keep the true `α`.
    AlphaShift(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest residual observed.
    pub residual: f64,
    pub tolerance: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfTestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.suites.iter().filter(|s| !s.passed).map(|s| s.name).collect()
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }
}

fn grid() -> Vec<ModelParams> {
    GRID.iter()
        .map(|&(a, m, r)| ModelParams::new(a, m, r).expect("grid is valid"))
        .collect()
}

fn subject(p: &ModelParams, fault: Option<Fault>) -> ModelParams {
    match fault {
        Some(Fault::AlphaShift(d)) => ModelParams { alpha: p.alpha + d, ..*p },
        None => *p,
    }
}

fn s_grid() -> impl Iterator<Item = f64> {
    (0..=20).map(|k| k as f64 / 20.0)
}

/// `max |Ψ_X(s) - Ψ_X(Ψ_G(s)) Ψ_ε(s)|` over the grid.
pub fn functional_equation_residual(fault: Option<Fault>) -> f64 {
    let mut worst = 0.0f64;
    for p in grid() {
        let q = subject(&p, fault);
        let (x, e) = (p.marginal(), p.innovation());
        for s in s_grid() {
            worst = worst.max((x.pgf(s) - x.pgf(q.g_pgf(s)) * e.pgf(s)).abs());
        }
    }
    worst
}

fn thinning_oracle(fault: Option<Fault>) -> f64 {
    let mut worst = 0.0f64;
    for p in grid() {
        let q = subject(&p, fault);
        for h in 1..=3u32 {
            let alpha_h = p.alpha.powi(h as i32);
            let q_h = p.r / (p.r + (1.0 - alpha_h) * p.mu);
            let b = alpha_h * q_h;
            let single = |k: u64| if k == 0 { 1.0 - b } else { b * q_h * (1.0 - q_h).powi(k as i32 - 1) };
            for x in 0..=5u64 {
                let brute = oracle::convolution_power(single, x, 15);
                for (k, want) in brute.iter().enumerate() {
                    worst = worst.max((q.thin_conditional_pmf(x, h, k as u64) - want).abs());
                }
            }
        }
    }
    worst
}

fn transition_rows(fault: Option<Fault>) -> f64 {
    let mut worst = 0.0f64;
    for p in grid() {
        let q = subject(&p, fault);
        for h in [1u32, 2, 5] {
            let kernel = TransitionKernel::new(&q, h, default_max_state(&p).max(120));
            for i in 0..=20 {
                let mass: f64 = kernel.row(i).iter().sum();
                worst = worst.max((1.0 - mass).abs());
            }
        }
    }
    let hand = subject(&ModelParams::new(0.5, 2.0, 1.0).unwrap(), fault);
    worst.max((transition_prob(&hand, 1, 1, 1) - 0.25).abs() * 1e5)
}

fn transition_oracle(fault: Option<Fault>) -> f64 {
    let mut worst = 0.0f64;
    for p in grid() {
        let q = subject(&p, fault);
        for h in 1..=3u32 {
            for i in 0..=5u64 {
                let row = oracle::transition_row_by_convolution(&p, i, h, 30);
                for (j, want) in row.iter().enumerate() {
                    worst = worst.max((transition_prob(&q, i, j as u64, h) - want).abs());
                }
            }
        }
    }
    worst
}

fn geometric_specialization(fault: Option<Fault>) -> f64 {
    let mut worst = 0.0f64;
    for &(alpha, mu, _) in &GRID {
        let p = ModelParams::new(alpha, mu, 1.0).unwrap();
        let q = subject(&p, fault);
        for h in 1..=4u32 {
            for i in 0..=15u64 {
                for j in 0..=15u64 {
                    let want = oracle::geometric_transition(alpha, mu, i, j, h);
                    worst = worst.max((transition_prob(&q, i, j, h) - want).abs());
                }
            }
        }
    }
    worst
}

fn chapman_kolmogorov(fault: Option<Fault>) -> f64 {
    let p = ModelParams::new(0.5, 2.0, 1.0).unwrap();
    chapman_kolmogorov_residual(&subject(&p, fault), 80, 1, 1)
}

fn semigroup(fault: Option<Fault>) -> f64 {
    let mut worst = 0.0f64;
    for p in grid() {
        let q = subject(&p, fault);
        let base = p.offspring();
        for h in 1..=6u32 {
            let cur = p.h_fold(h).offspring();
            let next = q.h_fold(h + 1).offspring();
            for s in s_grid() {
                worst = worst.max((base.pgf(cur.pgf(s)) - next.pgf(s)).abs());
            }
            let hf = q.h_fold(h);
            let alpha_h = p.alpha.powi(h as i32);
            let q_h = p.r / (p.r + (1.0 - alpha_h) * p.mu);
            worst = worst.max((hf.beta_h - alpha_h * q_h).abs());
            worst = worst.max((1.0 - (1.0 - hf.beta_h) * hf.theta - q_h).abs());
        }
    }
    worst
}

fn moments(fault: Option<Fault>) -> f64 {
    let mut worst = 0.0f64;
    for p in grid() {
        let q = subject(&p, fault);
        let m = ModelMoments::new(&q);
        let brute_g = oracle::brute_central_moments(|k| p.g_pmf(k), 400);
        for (got, want) in m.offspring.iter().zip(&brute_g) {
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
        let s2 = p.marginal().variance();
        worst = worst.max((m.c2 - (1.0 - p.alpha * p.alpha) * s2).abs());
        let mu_eps = p.mu_eps();
        let se2 = p.innovation().variance();
        worst = worst.max(((se2 - mu_eps) - mu_eps * mu_eps / p.r).abs());
    }
    worst
}

fn reversibility(fault: Option<Fault>) -> f64 {
    let mut worst = 0.0f64;
    for p in grid() {
        let q = subject(&p, fault);
        for s in s_grid() {
            for t in s_grid() {
                worst = worst.max((joint_pgf(&q, s, t) - joint_pgf(&p, t, s)).abs());
            }
        }
    }
    worst
}

fn estimators(_fault: Option<Fault>) -> f64 {
    let s = crate::process::Series::new(vec![1, 2, 1, 2, 1]);
    match cls_means(&s) {
        Ok(m) => (m.alpha_hat + 1.0).abs() + (m.mu_eps_hat - 3.0).abs(),
        Err(_) => f64::INFINITY,
    }
}

type Suite = (&'static str, fn(Option<Fault>) -> f64, f64);

const SUITES: [Suite; 10] = [
    ("functional-equation", functional_equation_residual, 1e-12),
    ("thinning-oracle", thinning_oracle, 1e-12),
    ("transition-rows", transition_rows, 1e-9),
    ("transition-oracle", transition_oracle, 1e-12),
    ("geometric-specialization", geometric_specialization, 1e-13),
    ("chapman-kolmogorov", chapman_kolmogorov, 1e-8),
    ("semigroup", semigroup, 1e-12),
    ("moments", moments, 1e-12),
    ("reversibility", reversibility, 1e-14),
    ("estimators", estimators, 1e-12),
];

pub fn run(fault: Option<Fault>) -> SelfTestReport {
    let suites = SUITES
        .iter()
        .map(|&(name, f, tolerance)| {
            let start = Instant::now();
            let residual = f(fault);
            SuiteResult {
                name,
                passed: residual <= tolerance,
                residual,
                tolerance,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect();
    SelfTestReport { suites }
}
