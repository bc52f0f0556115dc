//! Simulate a stationary series and compare it with the model.
//!
//! ```text
//! cargo run --release --example simulate_series [n] [seed]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nbinar::oracle::total_variation;
use nbinar::process::{autocorrelation, simulate};
use nbinar::ModelParams;

fn main() -> nbinar::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(100_000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);

    let p = ModelParams::new(0.5, 2.0, 1.0)?;
    let series = simulate(&p, n, &mut ChaCha8Rng::seed_from_u64(seed));
    let law = p.marginal();
    println!("n = {n}, seed = {seed}");
    println!("first values: {:?}", &series.values[..20.min(n)]);
    println!("sample mean {:.4} (model {})", series.mean(), p.mu);
    for k in 1..=3 {
        println!("lag {k}: sample acf {:.4}, model {:.4}", series.autocorrelation(k), autocorrelation(&p, k as u32));
    }
    let tv = total_variation(&series.values, |k| law.pmf(k), 60);
    println!("TV distance to NB(r, mu): {tv:.4}");
    Ok(())
}
