//! Exact h-step transition probabilities and a truncated transition table.
//!
//! ```text
//! cargo run --example transition_law
//! ```

use nbinar::process::{
    chapman_kolmogorov_residual, conditional_moments, default_max_state, transition_prob,
    transition_table,
};
use nbinar::ModelParams;

fn main() -> nbinar::Result<()> {
    let p = ModelParams::new(0.5, 2.0, 1.0)?;
    println!("p_11 = {}", transition_prob(&p, 1, 1, 1));
    println!("p_00 = {}", transition_prob(&p, 0, 0, 1));

    for h in [1, 2, 5, 20] {
        let (mean, var) = conditional_moments(&p, 4, h);
        println!("X_(t+{h}) | X_t = 4: mean {mean:.4}, variance {var:.4}");
    }

    let j = default_max_state(&p);
    let table = transition_table(&p, j, 2)?;
    println!("two-step table on states 0..={j}");
    for i in 0..4 {
        let row: Vec<String> = (0..6).map(|k| format!("{:.5}", table.get(i, k))).collect();
        println!("  row {i}: {} ... tail {:.1e}", row.join(" "), table.tail_mass[i]);
    }
    println!(
        "Chapman-Kolmogorov residual on 0..=80: {:.2e}",
        chapman_kolmogorov_residual(&p, 80, 1, 1)
    );
    Ok(())
}
