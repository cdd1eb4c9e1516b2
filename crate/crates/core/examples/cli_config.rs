//! Drive the command layer from an inline config, as the binary does.

use std::path::PathBuf;

use wannier_ladder::commands::{run, Command, RunOptions};
use wannier_ladder::config::parse_config;

const CONFIG: &str = r#"
[model]
nx = 8
ny = 8
t = 1.0
t_prime = 0.1
v = 1.0
phi = "pi/2"
bc_x = "periodic"
bc_y = "periodic"

[pipeline]
gap_threshold = 0.3
"#;

fn main() {
    let cfg = match parse_config(CONFIG) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    let out = std::env::temp_dir().join("wannier-ladder-example");
    let opts = RunOptions { force: false, out: Some(out), grid: None, config_dir: PathBuf::new() };
    for command in [Command::Spectrum, Command::Gwf, Command::Chern] {
        match run(command, cfg.clone(), &opts) {
            Ok(outcome) => println!("{}: wrote {}", command.name(), outcome.dir.display()),
            Err(e) => {
                eprintln!("{}: {}", command.name(), e.record());
                std::process::exit(e.exit_code());
            }
        }
    }
}
