//! The moving-average form `X = Σ_j (α, μ, r)★^j ε_j`, truncated at `J` terms.
//!
//! ```text
//! cargo run --release --example ma_representation
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nbinar::oracle::total_variation;
use nbinar::process::{ma_pgf, ma_sample};
use nbinar::ModelParams;

fn main() -> nbinar::Result<()> {
    let p = ModelParams::new(0.5, 2.0, 1.0)?;
    let law = p.marginal();
    let target = law.pgf(0.5);
    for j in [1, 2, 5, 10, 20, 50] {
        println!("J = {j:>2}: |pgf_J(0.5) - pgf_X(0.5)| = {:.3e}", (ma_pgf(&p, j, 0.5) - target).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<u64> = (0..50_000).map(|_| ma_sample(&p, 50, &mut rng)).collect();
    println!("TV of 50000 truncated draws to NB(r, mu): {:.4}", total_variation(&draws, |k| law.pmf(k), 60));
    Ok(())
}
