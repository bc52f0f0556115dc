//! The thinning operator `(α, μ, r)★x` and its `(β, θ)⊙` form.
//!
//! ```text
//! cargo run --example thinning_operator
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nbinar::thinning::star_to_odot;
use nbinar::ModelParams;

fn main() -> nbinar::Result<()> {
    let p = ModelParams::new(0.5, 2.0, 1.0)?;
    let alt = star_to_odot(&p);
    println!("(alpha, mu, r) = ({}, {}, {})", p.alpha, p.mu, p.r);
    println!("(beta, theta, r) = ({:.6}, {:.6}, {})", alt.beta, alt.theta, alt.r);

    let g = p.g_central_moments();
    println!("offspring G: mean {:.6}, variance {:.6}", g[0], g[1]);
    for k in 0..5 {
        println!("  P(G = {k}) = {:.6}", p.g_pmf(k));
    }

    let x = 6;
    println!("P((alpha, mu, r)*{x} = k):");
    for k in 0..=8 {
        println!("  k = {k}: {:.6}", p.thin_conditional_pmf(x, 1, k));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<u64> = (0..10_000).map(|_| p.thin_sample(x, &mut rng)).collect();
    let mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
    println!("sample mean of 10000 draws: {mean:.4} (exact {})", p.alpha * x as f64);

    for h in [1, 2, 5] {
        let hf = p.h_fold(h);
        println!("h = {h}: beta_h = {:.6}, alpha^h q_h = {:.6}", hf.beta_h, hf.alpha_h * hf.q_tilde_h);
    }
    Ok(())
}
