use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use netal::harness::{export_query_geography, load_dataset, parse_config, run_experiment, ExperimentConfig};
use netal::synth::{generate_synthetic_dataset, write_dataset_csv};
use netal::{Error, Strategy};

#[derive(Parser)]
#[command(name = "netal", version, about = "Cost-aware active learning for network telemetry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured (strategy, seed) pair and write curves plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run only this strategy (random, uncertainty, qbc, coreset, hybrid).
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long = "batch-size")]
        batch_size: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write a synthetic twin-world dataset as CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export per-iteration query geography for a finished run directory.
    Geo {
        #[arg(long)]
        run: PathBuf,
        /// Feature index used as longitude.
        #[arg(long = "lon-col")]
        lon_col: usize,
        /// Feature index used as latitude.
        #[arg(long = "lat-col")]
        lat_col: usize,
    },
}

/// Config problems exit with 1, everything else with 2.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn config(path: &Path) -> Result<ExperimentConfig, Failure> {
    parse_config(path).map_err(|e| {
        let err = anyhow::Error::new(e).context(format!("reading config {}", path.display()));
        Failure::Config(err)
    })
}

fn runtime(e: Error) -> Failure {
    if e.is_config() {
        Failure::Config(e.into())
    } else {
        Failure::Runtime(e.into())
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config: path,
            seed,
            strategy,
            iterations,
            batch_size,
            output,
        } => {
            let mut cfg = config(&path)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            if let Some(s) = strategy {
                cfg.strategies = vec![s];
            }
            if let Some(k) = iterations {
                cfg.loop_cfg.iterations = k;
            }
            if let Some(b) = batch_size {
                if b == 0 {
                    return Err(Failure::Config(anyhow::anyhow!("--batch-size must be >= 1")));
                }
                cfg.loop_cfg.batch_size = b;
            }
            if let Some(out) = output {
                cfg.output = out;
            }
            cfg.validate().map_err(runtime)?;
            let report = run_experiment(&cfg).map_err(runtime)?;
            print!("{}", report.summary);
            eprintln!("wrote {} runs to {}", report.runs.len(), report.output.display());
        }
        Command::Synth { config: path, n, out } => {
            let mut cfg = config(&path)?;
            if n == 0 {
                return Err(Failure::Config(anyhow::anyhow!("--n must be >= 1")));
            }
            cfg.data.synthetic_samples = n;
            let samples = if cfg.is_synthetic() {
                load_dataset(&cfg).map_err(runtime)?.samples
            } else {
                generate_synthetic_dataset(&cfg.world, n, cfg.data.synthetic_seed)
            };
            write_dataset_csv(&samples, &out)
                .with_context(|| format!("writing {}", out.display()))
                .map_err(Failure::Runtime)?;
            eprintln!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Geo { run, lon_col, lat_col } => {
            let files = export_query_geography(&run, lon_col, lat_col).map_err(runtime)?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
