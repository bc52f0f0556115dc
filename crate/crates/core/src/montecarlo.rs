//! Replicated simulate-then-estimate experiments.
//!
//! Replicate `k` at length `n` draws its series from a ChaCha8 stream seeded
//! by hashing `(master_seed, n, k)`, so results do not depend on thread
//! scheduling and a grid can be extended without disturbing earlier cells.
//! Every estimator in a run sees the same simulated series.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    cls_means, cls_variances, cml_fit, predicted_cov, yw_means, EstimationMethod, Mat2, MeanInput,
};
use crate::process::{simulate, Series};
use crate::thinning::ModelParams;

/// Environment variable capping the worker count (`0` or unset means one
/// worker per core).
pub const THREADS_ENV: &str = "NBINAR_THREADS";

pub const QUANTILE_LEVELS: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCConfig {
    pub params: ModelParams,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub estimators: Vec<EstimationMethod>,
    pub master_seed: u64,
    /// Directory receiving `replicates.csv` and `report.json`.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        self.params
            .validated()
            .map_err(|e| Error::Config(format!("params: {e}")))?;
        if self.replicates < 2 {
            return Err(Error::Config("replicates must be at least 2".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must not be empty".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 10) {
            return Err(Error::Config(format!("n_grid entry {n} is below 10")));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators must not be empty".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: MCConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream seed for replicate `replicate` at series length `n`.
pub fn replicate_seed(master: u64, n: usize, replicate: usize) -> u64 {
    mix(mix(mix(master) ^ n as u64) ^ replicate as u64)
}

/// One line of the raw replicate table. Estimates that an estimator does
/// not produce are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub estimator: EstimationMethod,
    pub n: usize,
    pub replicate: usize,
    pub alpha_hat: Option<f64>,
    pub mu_eps_hat: Option<f64>,
    pub mu_hat: Option<f64>,
    pub sigma_g2_hat: Option<f64>,
    pub sigma_eps2_hat: Option<f64>,
    pub r_hat: Option<f64>,
    /// `;`-separated tags: `ok`, `failed`, `out_of_range`, `r_undefined`,
    /// `not_converged`.
    pub flags: String,
    /// `√n |α̂_yw - α̂_cls|` on the same series, for Yule–Walker rows.
    pub yw_cls_gap: Option<f64>,
}

impl ReplicateRow {
    fn empty(estimator: EstimationMethod, n: usize, replicate: usize) -> Self {
        Self {
            estimator,
            n,
            replicate,
            alpha_hat: None,
            mu_eps_hat: None,
            mu_hat: None,
            sigma_g2_hat: None,
            sigma_eps2_hat: None,
            r_hat: None,
            flags: String::new(),
            yw_cls_gap: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.flags.split(';').any(|f| f == "failed")
    }

    /// The coordinates summarized for this row's estimator.
    fn target(&self) -> Option<Vec<f64>> {
        match self.estimator {
            EstimationMethod::Cls | EstimationMethod::Yw => {
                Some(vec![self.alpha_hat?, self.mu_eps_hat?])
            }
            EstimationMethod::ClsVar => Some(vec![self.sigma_g2_hat?, self.sigma_eps2_hat?]),
            EstimationMethod::Cml => Some(vec![self.alpha_hat?, self.mu_hat?, self.r_hat?]),
        }
    }
}

/// Names of the summarized coordinates and their true values.
pub fn target_truth(method: EstimationMethod, p: &ModelParams) -> (Vec<&'static str>, Vec<f64>) {
    match method {
        EstimationMethod::Cls | EstimationMethod::Yw => {
            (vec!["alpha", "mu_eps"], vec![p.alpha, p.mu_eps()])
        }
        EstimationMethod::ClsVar => {
            let g = p.g_central_moments();
            let e = p.innovation().central_moments();
            (vec!["sigma_g2", "sigma_eps2"], vec![g[1], e[1]])
        }
        EstimationMethod::Cml => (vec!["alpha", "mu", "r"], vec![p.alpha, p.mu, p.r]),
    }
}

fn predicted_for(method: EstimationMethod, p: &ModelParams) -> Option<Mat2> {
    let cov = predicted_cov(p);
    match method {
        EstimationMethod::Cls | EstimationMethod::Yw => Some(cov.sigma_means),
        EstimationMethod::ClsVar => Some(cov.sigma_vars),
        EstimationMethod::Cml => None,
    }
}

fn run_replicate(
    series: &Series,
    method: EstimationMethod,
    n: usize,
    replicate: usize,
) -> ReplicateRow {
    let mut row = ReplicateRow::empty(method, n, replicate);
    let mut flags: Vec<&str> = Vec::new();
    let outcome: Result<()> = (|| {
        match method {
            EstimationMethod::Cls | EstimationMethod::Yw => {
                let m = if method == EstimationMethod::Cls {
                    cls_means(series)?
                } else {
                    yw_means(series)?
                };
                row.alpha_hat = Some(m.alpha_hat);
                row.mu_eps_hat = Some(m.mu_eps_hat);
                row.mu_hat = Some(m.mu_hat);
                if !m.in_range {
                    flags.push("out_of_range");
                }
                if method == EstimationMethod::Yw {
                    let cls = cls_means(series)?;
                    row.yw_cls_gap =
                        Some((series.len() as f64 - 1.0).sqrt() * (m.alpha_hat - cls.alpha_hat).abs());
                }
            }
            EstimationMethod::ClsVar => {
                let m = cls_means(series)?;
                let v = cls_variances(series, MeanInput::Estimated(m))?;
                row.alpha_hat = Some(m.alpha_hat);
                row.mu_eps_hat = Some(m.mu_eps_hat);
                row.mu_hat = Some(m.mu_hat);
                row.sigma_g2_hat = Some(v.sigma_g2_hat);
                row.sigma_eps2_hat = Some(v.sigma_eps2_hat);
                row.r_hat = v.r_hat;
                if !m.in_range {
                    flags.push("out_of_range");
                }
                if v.r_hat.is_none() {
                    flags.push("r_undefined");
                }
            }
            EstimationMethod::Cml => {
                let fit = cml_fit(series, None)?;
                row.alpha_hat = Some(fit.params.alpha);
                row.mu_eps_hat = Some(fit.params.mu_eps());
                row.mu_hat = Some(fit.params.mu);
                row.r_hat = Some(fit.params.r);
                if !fit.converged {
                    flags.push("not_converged");
                }
            }
        }
        Ok(())
    })();
    if outcome.is_err() {
        row = ReplicateRow::empty(method, n, replicate);
        flags = vec!["failed"];
    } else if flags.is_empty() {
        flags.push("ok");
    }
    row.flags = flags.join(";");
    row
}

/// Aggregate statistics of a set of estimate vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    /// Sample covariance with `1/(R-1)` normalization.
    pub cov: Vec<Vec<f64>>,
    /// Per coordinate, the type-7 quantiles at [`QUANTILE_LEVELS`].
    pub quantiles: Vec<[f64; 3]>,
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantiles(values: &[f64]) -> [f64; 3] {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    QUANTILE_LEVELS.map(|q| quantile_sorted(&sorted, q))
}

/// Bias, covariance and quartiles of `values` around `truth`.
pub fn summarize(values: &[Vec<f64>], truth: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyReport);
    }
    if values.len() < 2 {
        return Err(Error::Config("at least two successful replicates are needed".into()));
    }
    let dim = truth.len();
    let count = values.len();
    let mean: Vec<f64> = (0..dim)
        .map(|k| values.iter().map(|v| v[k]).sum::<f64>() / count as f64)
        .collect();
    let bias = mean.iter().zip(truth).map(|(m, t)| m - t).collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for v in values {
        for a in 0..dim {
            for b in 0..dim {
                cov[a][b] += (v[a] - mean[a]) * (v[b] - mean[b]);
            }
        }
    }
    for row in &mut cov {
        for c in row.iter_mut() {
            *c /= (count - 1) as f64;
        }
    }
    let quantiles = (0..dim)
        .map(|k| quantiles(&values.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect();
    Ok(Summary { count, mean, bias, cov, quantiles })
}

/// Aggregate block for one `(estimator, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub estimator: EstimationMethod,
    pub n: usize,
    pub replicates: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub coordinates: Vec<String>,
    pub truth: Vec<f64>,
    pub summary: Option<Summary>,
    /// `n` times the sample covariance, i.e. the covariance of the √n-scaled
    /// errors.
    pub empirical_cov: Option<Vec<Vec<f64>>>,
    pub predicted_cov: Option<Mat2>,
    /// `|empirical - predicted| / |predicted|` entrywise.
    pub relative_deviation: Option<Vec<Vec<f64>>>,
    pub max_relative_deviation: Option<f64>,
    /// Quartiles of `√n |α̂_yw - α̂_cls|` (Yule–Walker cells only).
    pub yw_cls_gap_quantiles: Option<[f64; 3]>,
    /// Quartiles of `r̂` over replicates where it is defined.
    pub r_hat_quantiles: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub config: MCConfig,
    pub cells: Vec<CellReport>,
    #[serde(skip)]
    pub rows: Vec<ReplicateRow>,
}

impl MCReport {
    pub fn cell(&self, estimator: EstimationMethod, n: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.estimator == estimator && c.n == n)
    }

    pub fn rows_for(&self, estimator: EstimationMethod, n: usize) -> impl Iterator<Item = &ReplicateRow> {
        self.rows.iter().filter(move |r| r.estimator == estimator && r.n == n)
    }
}

fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0)
}

fn build_cell(cfg: &MCConfig, method: EstimationMethod, n: usize, rows: &[ReplicateRow]) -> CellReport {
    let (names, truth) = target_truth(method, &cfg.params);
    let ok: Vec<Vec<f64>> = rows.iter().filter(|r| !r.failed()).filter_map(|r| r.target()).collect();
    let failed = rows.len() - ok.len();
    let summary = summarize(&ok, &truth).ok();
    let empirical_cov = summary.as_ref().map(|s| {
        s.cov.iter().map(|row| row.iter().map(|c| c * n as f64).collect()).collect::<Vec<Vec<f64>>>()
    });
    let predicted = predicted_for(method, &cfg.params);
    let relative_deviation = match (&empirical_cov, &predicted) {
        (Some(emp), Some(pred)) => Some(
            (0..2)
                .map(|i| (0..2).map(|j| (emp[i][j] - pred[i][j]).abs() / pred[i][j].abs()).collect())
                .collect::<Vec<Vec<f64>>>(),
        ),
        _ => None,
    };
    let max_relative_deviation = relative_deviation
        .as_ref()
        .map(|d| d.iter().flatten().copied().fold(0.0, f64::max));
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.yw_cls_gap).collect();
    let r_hats: Vec<f64> = rows.iter().filter(|r| !r.failed()).filter_map(|r| r.r_hat).collect();
    CellReport {
        estimator: method,
        n,
        replicates: rows.len(),
        succeeded: ok.len(),
        failed,
        coordinates: names.into_iter().map(String::from).collect(),
        truth,
        summary,
        empirical_cov,
        predicted_cov: predicted,
        relative_deviation,
        max_relative_deviation,
        yw_cls_gap_quantiles: (!gaps.is_empty()).then(|| quantiles(&gaps)),
        r_hat_quantiles: (!r_hats.is_empty()).then(|| quantiles(&r_hats)),
    }
}

/// Runs every `(n, replicate)` pair, in parallel, and assembles the report
/// in grid order. Writes the output files when `output_path` is set.
pub fn run_experiment(cfg: &MCConfig) -> Result<MCReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |k| (n, k)))
        .collect();
    let work = || -> Vec<Vec<ReplicateRow>> {
        jobs.par_iter()
            .map(|&(n, k)| {
                let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(cfg.master_seed, n, k));
                let series = simulate(&cfg.params, n, &mut rng);
                cfg.estimators.iter().map(|&m| run_replicate(&series, m, n, k)).collect()
            })
            .collect()
    };
    let per_job = match worker_count() {
        0 => work(),
        threads => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
    };

    let mut rows = Vec::with_capacity(jobs.len() * cfg.estimators.len());
    for &method in &cfg.estimators {
        for job_rows in &per_job {
            rows.extend(job_rows.iter().filter(|row| row.estimator == method).cloned());
        }
    }
    let mut cells = Vec::new();
    for &method in &cfg.estimators {
        for &n in &cfg.n_grid {
            let cell_rows: Vec<ReplicateRow> =
                rows.iter().filter(|r| r.estimator == method && r.n == n).cloned().collect();
            cells.push(build_cell(cfg, method, n, &cell_rows));
        }
    }
    let report = MCReport { config: cfg.clone(), cells, rows };
    if let Some(dir) = &cfg.output_path {
        write_report(&report, dir)?;
    }
    Ok(report)
}

pub const REPLICATES_FILE: &str = "replicates.csv";
pub const REPORT_FILE: &str = "report.json";

/// Writes `replicates.csv` and `report.json` into `dir`, creating it if
/// needed.
pub fn write_report(report: &MCReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(REPLICATES_FILE))?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(dir.join(REPORT_FILE), json + "\n")?;
    Ok(())
}
