//! A small Monte Carlo experiment comparing empirical and predicted
//! covariances. Pass a directory to also write `replicates.csv` and
//! `report.json`.
//!
//! ```text
//! cargo run --release --example monte_carlo [output-dir]
//! ```

use nbinar::estimation::EstimationMethod;
use nbinar::montecarlo::{run_experiment, MCConfig};
use nbinar::ModelParams;

fn main() -> nbinar::Result<()> {
    let cfg = MCConfig {
        params: ModelParams::new(0.5, 2.0, 1.0)?,
        n_grid: vec![500, 2000],
        replicates: 200,
        estimators: vec![EstimationMethod::Cls, EstimationMethod::Yw, EstimationMethod::ClsVar],
        master_seed: 2024,
        output_path: std::env::args().nth(1).map(Into::into),
    };
    let report = run_experiment(&cfg)?;
    for cell in &report.cells {
        let s = cell.summary.as_ref().expect("replicates succeeded");
        println!(
            "{:>7} n={:>4}: {:?} bias {:.4?}, max relative deviation {}, failed {}",
            cell.estimator.to_string(),
            cell.n,
            cell.coordinates,
            s.bias,
            cell.max_relative_deviation.map_or("-".to_string(), |d| format!("{d:.3}")),
            cell.failed
        );
        if let Some(q) = cell.yw_cls_gap_quantiles {
            println!("         sqrt(n)|alpha_yw - alpha_cls| quartiles {q:.4?}");
        }
    }
    Ok(())
}
