use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lacunary::config::{ExperimentConfig, GRID_N_ENV};
use lacunary::experiments::registry;
use lacunary::records::{compare, read_records, run, write_run};

#[derive(Parser)]
#[command(name = "lacunary", version, about = "Batch experiments for lacunary bilinear multipliers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Relative drift between the last runs of two record files.
    Compare {
        baseline: PathBuf,
        current: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        budget: f64,
        /// Restrict to these metrics (comma separated).
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
    },
    /// List registered experiment kinds.
    ListExperiments,
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Ok(v) = std::env::var(GRID_N_ENV) {
        cfg.grid.n = v.parse().map_err(|_| format!("{GRID_N_ENV}={v} is not an integer"))?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ListExperiments => {
            for (name, e) in registry() {
                println!("{name}\t{}", e.describe());
            }
            Ok(true)
        }
        Command::Run { config, seed, out } => load(&config, seed).and_then(|cfg| {
            let r = run(&cfg).map_err(|e| e.to_string())?;
            write_run(&out, &r).map_err(|e| e.to_string())?;
            print!("{}", r.summary());
            Ok(r.passed())
        }),
        Command::Compare {
            baseline,
            current,
            budget,
            metrics,
        } => (|| {
            let read = |p: &PathBuf| {
                std::fs::read_to_string(p)
                    .map_err(|e| format!("{}: {e}", p.display()))
                    .and_then(|t| read_records(&t).map_err(|e| e.to_string()))
            };
            let only: Vec<&str> = metrics.iter().map(String::as_str).collect();
            let rep = compare(&read(&baseline)?, &read(&current)?, budget, &only).map_err(|e| e.to_string())?;
            print!("{}", rep.to_text());
            Ok(rep.breaches().is_empty())
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
