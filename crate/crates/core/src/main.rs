use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use saczyzzyva::feasibility;
use saczyzzyva::harness::{append_csv, check_invariants, compute_metrics, run_suite, ScenarioConfig};
use saczyzzyva::simnet::{self, Scenario};
use saczyzzyva::transcript::Transcript;

#[derive(Parser)]
#[command(name = "saczyzzyva", about = "Replication protocol simulator and analyzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print per-request metrics as CSV.
    Run {
        /// Scenario config (TOML).
        config: PathBuf,
        /// Override the config's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the full run transcript (NDJSON) here.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run a scenario across a range of seeds, one CSV block per run.
    Sweep {
        config: PathBuf,
        /// First seed (inclusive).
        #[arg(long, default_value_t = 0)]
        from: u64,
        /// Number of seeds to run.
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check all protocol invariants over a saved transcript.
    Check { transcript: PathBuf },
    /// Print the feasibility region table (n, b, largest feasible f) as CSV.
    Region {
        #[arg(long, default_value_t = 9)]
        max_n: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_scenario(path: &PathBuf) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg = ScenarioConfig::from_toml(&text).map_err(|e| e.to_string())?;
    cfg.to_scenario().map_err(|e| e.to_string())
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run_cli(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run_cli(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run { config, seed, out, transcript } => {
            let mut scenario = load_scenario(&config)?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let t = simnet::run(&scenario).map_err(|e| e.to_string())?;
            if let Some(path) = &transcript {
                std::fs::write(path, t.to_ndjson())
                    .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            let name = config
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into());
            let metrics = compute_metrics(&t);
            let mut csv = String::from(saczyzzyva::harness::CSV_HEADER);
            append_csv(&mut csv, &name, &metrics);
            emit(&out, &csv)?;
            eprintln!(
                "{} requests completed, {} fallbacks, {} messages, {} view changes",
                metrics.completed, metrics.fallbacks, metrics.total_messages, metrics.view_changes
            );
            let violations = check_invariants(&t);
            for v in &violations {
                eprintln!("violation: {v}");
            }
            Ok(if violations.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Sweep { config, from, count, out } => {
            let base = load_scenario(&config)?;
            let entries: Vec<(String, Scenario)> = (from..from + count)
                .map(|seed| {
                    let mut s = base.clone();
                    s.seed = seed;
                    (format!("seed-{seed}"), s)
                })
                .collect();
            let csv = run_suite(&entries).map_err(|e| e.to_string())?;
            emit(&out, &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { transcript } => {
            let text = std::fs::read_to_string(&transcript)
                .map_err(|e| format!("{}: {e}", transcript.display()))?;
            let t = Transcript::from_ndjson(&text).map_err(|e| e.to_string())?;
            let violations = check_invariants(&t);
            if violations.is_empty() {
                println!("ok: {} records, no violations", t.records.len());
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &violations {
                    println!("violation: {v}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Region { max_n, out } => {
            let table = feasibility::region_table(max_n).map_err(|e| e.to_string())?;
            emit(&out, &table)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
