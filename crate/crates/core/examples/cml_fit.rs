//! Conditional maximum likelihood with the Nelder–Mead simplex.
//!
//! ```text
//! cargo run --release --example cml_fit
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nbinar::estimation::{cml_fit, loglik};
use nbinar::process::simulate;
use nbinar::ModelParams;

fn main() -> nbinar::Result<()> {
    let p = ModelParams::new(0.5, 2.0, 1.0)?;
    let series = simulate(&p, 2000, &mut ChaCha8Rng::seed_from_u64(21));

    let fit = cml_fit(&series, None)?;
    println!("start: {:?}", fit.init);
    println!(
        "fit: alpha {:.4}, mu {:.4}, r {:.4}; loglik {:.3} after {} iterations (converged {})",
        fit.params.alpha, fit.params.mu, fit.params.r, fit.loglik, fit.iterations, fit.converged
    );
    println!("loglik at truth: {:.3}", loglik(&series, &p)?.value);
    for d in [-0.2, 0.2] {
        let off = ModelParams::new(p.alpha + d, p.mu, p.r)?;
        println!("loglik at alpha {:.1}: {:.3}", off.alpha, loglik(&series, &off)?.value);
    }
    Ok(())
}
