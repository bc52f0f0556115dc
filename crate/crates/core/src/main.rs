use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use nbinar::estimation::{estimate, EstimationMethod};
use nbinar::io::{format_prob, read_series, write_series, write_table};
use nbinar::montecarlo::{run_experiment, MCConfig};
use nbinar::process::{simulate, transition_prob, transition_table, SeriesMeta};
use nbinar::selftest::{self, Fault};
use nbinar::{Error, ModelParams, Result};

#[derive(Parser)]
#[command(name = "nbinar", version, about = "Negative binomial INAR(1) count time series")]
struct Cli {
    /// JSON file with default values for flags (alpha, mu, r, n, seed, h,
    /// method, known_alpha, known_mueps); flags on the command line win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ParamArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a stationary series.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Series file; a `.meta.json` sidecar is written next to it.
        /// Prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// h-step transition probability, or a full table with --table.
    Transition {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        i: Option<u64>,
        #[arg(long)]
        j: Option<u64>,
        #[arg(long)]
        h: Option<u32>,
        /// Write the table for states 0..=J as CSV.
        #[arg(long, value_name = "J", conflicts_with_all = ["i", "j"])]
        table: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate parameters from a series file.
    Estimate {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// cls, yw, cls-var or cml.
        #[arg(long)]
        method: Option<String>,
        #[arg(long, requires = "known_mueps")]
        known_alpha: Option<f64>,
        #[arg(long, requires = "known_alpha")]
        known_mueps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment described by a JSON config.
    Mc {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Overrides `output_path` from the config.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant suites.
    Selftest {
        /// Shift α on the closed-form side to check that the suites fail.
        #[arg(long, hide = true, value_name = "SHIFT")]
        inject_fault: Option<f64>,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct Defaults {
    alpha: Option<f64>,
    mu: Option<f64>,
    r: Option<f64>,
    n: Option<usize>,
    seed: Option<u64>,
    h: Option<u32>,
    method: Option<String>,
    known_alpha: Option<f64>,
    known_mueps: Option<f64>,
}

fn load_defaults(path: Option<&Path>) -> Result<Defaults> {
    match path {
        None => Ok(Defaults::default()),
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
    }
}

fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing --{name}")))
}

fn model_params(args: &ParamArgs, d: &Defaults) -> Result<ModelParams> {
    ModelParams::new(
        required(args.alpha.or(d.alpha), "alpha")?,
        required(args.mu.or(d.mu), "mu")?,
        required(args.r.or(d.r), "r")?,
    )
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let d = load_defaults(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { params, n, seed, out } => {
            let p = model_params(&params, &d)?;
            let n = required(n.or(d.n), "n")?;
            let seed = seed.or(d.seed).unwrap_or(0);
            let mut series = simulate(&p, n, &mut ChaCha8Rng::seed_from_u64(seed));
            series.meta = Some(SeriesMeta { seed: Some(seed), params: Some(p), mode: "stationary".into() });
            match out {
                Some(path) => write_series(&path, &series)?,
                None => write_output(None, &nbinar::io::format_series(&series.values))?,
            }
        }
        Command::Transition { params, i, j, h, table, out } => {
            let p = model_params(&params, &d)?;
            let h = h.or(d.h).unwrap_or(1);
            if let Some(max_state) = table {
                let t = transition_table(&p, max_state, h)?;
                match out {
                    Some(path) => write_table(&t, fs::File::create(path)?)?,
                    None => write_table(&t, io::stdout().lock())?,
                }
            } else {
                let prob = transition_prob(&p, required(i, "i")?, required(j, "j")?, h);
                write_output(out.as_deref(), &format!("{}\n", format_prob(prob)))?;
            }
        }
        Command::Estimate { input, method, known_alpha, known_mueps, out } => {
            let method: EstimationMethod = method.or(d.method).as_deref().unwrap_or("cls").parse()?;
            let known = match (known_alpha.or(d.known_alpha), known_mueps.or(d.known_mueps)) {
                (Some(a), Some(m)) => Some((a, m)),
                (None, None) => None,
                _ => return Err(Error::Config("--known-alpha and --known-mueps go together".into())),
            };
            let series = read_series(&input)?;
            let report = estimate(&series, method, known)?;
            write_output(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
        Command::Mc { config, out } => {
            let mut cfg = MCConfig::from_json(&fs::read_to_string(&config)?)?;
            if out.is_some() {
                cfg.output_path = out;
            }
            let report = run_experiment(&cfg)?;
            for cell in &report.cells {
                eprintln!(
                    "{} n={} ok={} failed={} max_rel_dev={}",
                    cell.estimator,
                    cell.n,
                    cell.succeeded,
                    cell.failed,
                    cell.max_relative_deviation.map_or("-".into(), |v| format!("{v:.4}")),
                );
            }
            if cfg.output_path.is_none() {
                write_output(None, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            }
        }
        Command::Selftest { inject_fault } => {
            let report = selftest::run(inject_fault.map(Fault::AlphaShift));
            for s in &report.suites {
                println!(
                    "{} {:<26} residual={:.3e} tolerance={:.0e} ({:.2}s)",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.name,
                    s.residual,
                    s.tolerance,
                    s.seconds
                );
            }
            if let Some(fe) = report.suite("functional-equation") {
                println!("functional-equation residual max over grid: {:.3e}", fe.residual);
            }
            if !report.passed() {
                println!("failed suites: {}", report.failures().join(", "));
                return Ok(ExitCode::from(1));
            }
            println!("all suites passed");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
