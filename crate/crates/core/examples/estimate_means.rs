//! Conditional least squares and Yule–Walker estimates of `(α, μ_ε)`.
//!
//! ```text
//! cargo run --release --example estimate_means
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nbinar::estimation::{cls_means, predicted_cov, yw_means};
use nbinar::process::{simulate, Series};
use nbinar::ModelParams;

fn main() -> nbinar::Result<()> {
    let tiny = Series::new(vec![1, 2, 1, 2, 1]);
    let m = cls_means(&tiny)?;
    println!("CLS on [1, 2, 1, 2, 1]: alpha {}, mu_eps {}, in range {}", m.alpha_hat, m.mu_eps_hat, m.in_range);

    let p = ModelParams::new(0.5, 2.0, 1.0)?;
    let series = simulate(&p, 5000, &mut ChaCha8Rng::seed_from_u64(11));
    for m in [cls_means(&series)?, yw_means(&series)?] {
        println!(
            "{:?}: alpha {:.4}, mu_eps {:.4}, mu {:.4}",
            m.method, m.alpha_hat, m.mu_eps_hat, m.mu_hat
        );
    }
    let cov = predicted_cov(&p);
    let n = (series.len() - 1) as f64;
    println!(
        "asymptotic standard errors at n = {n}: alpha {:.4}, mu_eps {:.4}",
        (cov.sigma_means[0][0] / n).sqrt(),
        (cov.sigma_means[1][1] / n).sqrt()
    );
    Ok(())
}
