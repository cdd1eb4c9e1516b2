use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;
use wannier_ladder::commands::{load_config, run, Command, RunOptions};

/// Generalized Wannier functions for finite Haldane models.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// spectrum | pxp | gwf | decay | chern | scan
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Build bands from whatever clusters exist when the uniform-gap check fails.
    #[arg(long)]
    force: bool,
    /// Output directory (overrides outputs.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scan axes, e.g. `v=0:2:5,t_prime=0:0.4:5` or `phi=0;pi/2`.
    #[arg(long)]
    grid: Option<String>,
}

fn fail(record: serde_json::Value, code: u8) -> ExitCode {
    eprintln!("{record}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(value) = std::env::var("WL_THREADS") {
        let threads = match value.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                let msg = format!("WL_THREADS must be a positive integer, got `{value}`");
                return fail(json!({ "error": "InvalidValue", "exit_code": 2, "message": msg }), 2);
            }
        };
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            return fail(json!({ "error": "ThreadPool", "exit_code": 4, "message": e.to_string() }), 4);
        }
    }
    let config_dir = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    let opts = RunOptions { force: cli.force, out: cli.out, grid: cli.grid, config_dir };
    match load_config(&cli.config).and_then(|cfg| run(cli.command, cfg, &opts)) {
        Ok(outcome) => {
            println!("{}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.record(), e.exit_code() as u8),
    }
}
