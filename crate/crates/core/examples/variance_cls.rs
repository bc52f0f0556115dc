//! Least squares for the conditional variance and the derived `r̂`.
//!
//! ```text
//! cargo run --release --example variance_cls
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nbinar::estimation::{cls_means, cls_variances, predicted_cov, MeanInput};
use nbinar::process::simulate;
use nbinar::ModelParams;

fn main() -> nbinar::Result<()> {
    let p = ModelParams::new(0.5, 2.0, 1.0)?;
    let g = p.g_central_moments();
    let e = p.innovation().central_moments();
    println!("truth: sigma_g2 {}, sigma_eps2 {}, sigma2 {}", g[1], e[1], p.marginal().variance());

    let series = simulate(&p, 10_000, &mut ChaCha8Rng::seed_from_u64(5));
    let means = cls_means(&series)?;
    let inputs = [
        ("estimated means", MeanInput::Estimated(means)),
        ("known means", MeanInput::Known { alpha: p.alpha, mu_eps: p.mu_eps() }),
    ];
    for (label, input) in inputs {
        let v = cls_variances(&series, input)?;
        println!(
            "{label}: sigma_g2 {:.4}, sigma_eps2 {:.4}, sigma2 {:.4} (display form {:.4}), r {:?}",
            v.sigma_g2_hat, v.sigma_eps2_hat, v.sigma2_hat, v.sigma2_hat_display, v.r_hat
        );
    }
    println!("asymptotic covariance of the variance estimators: {:?}", predicted_cov(&p).sigma_vars);
    Ok(())
}
