use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psmlab::config::{apply_overrides, load_scenario, Overrides, SEED_ENV};
use psmlab::{applied, export, figures, runner, Error};

#[derive(Parser)]
#[command(name = "psmlab", version, about = "Propensity score matching laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo caliper sweep and write CSV results
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Match the rows of a CSV file on an estimated propensity score
    Match {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        treatment: String,
        #[arg(long, value_delimiter = ',', required = true)]
        covariates: Vec<String>,
        #[arg(long, default_value_t = 0.2)]
        caliper: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG charts from a results directory
    Figures {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            replicates,
            workers,
            seed,
        } => {
            let mut cfg = load_scenario(&config)?;
            let env_seed = std::env::var(SEED_ENV).ok();
            apply_overrides(&mut cfg, env_seed.as_deref(), Overrides { replicates, seed })?;
            eprintln!(
                "{}: {} replicates of n = {}, seed {}",
                cfg.scenario_id, cfg.replicates, cfg.n, cfg.seed
            );
            let summary = runner::run_scenario_parallel(&cfg, workers)?;
            for path in export::write_results(&[summary], &out)? {
                println!("{}", path.display());
            }
        }
        Command::Match {
            input,
            treatment,
            covariates,
            caliper,
            out,
        } => {
            let result = applied::applied_match(&input, &treatment, &covariates, caliper, &out)?;
            eprintln!("{} pairs within caliper width {}", result.pairs.len(), result.caliper_width);
            println!("{}", result.matched_path.display());
            println!("{}", result.report_path.display());
        }
        Command::Figures { results, out } => {
            for path in figures::render_figures(&results, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("psmlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
