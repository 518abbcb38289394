//! `qsf` — batch front end for the quantum stochastic filtering toolkit.
//!
//! Usage: `qsf [command] --config <path> [--seed <u64>] [--out <dir>]`
//! where command is one of master, simulate, filter, ensemble, kalman,
//! ksgrid (it may come from the config's `command =` key instead). Exit
//! codes: 0 success, 2 configuration error, 3 invariant violation or
//! degenerate jump ratio.

mod config;
mod runner;

use config::CliArgs;

const USAGE: &str = "usage: qsf [command] --config <path> [--seed <u64>] [--out <dir>]
commands: master | simulate | filter | ensemble | kalman | ksgrid
environment: QSF_OUTPUT_ROOT sets the default output root";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--help" || a == "-h") {
        println!("{USAGE}");
        return;
    }
    let parsed = match CliArgs::parse(&args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            eprintln!("{USAGE}");
            std::process::exit(2);
        }
    };
    match runner::run(&parsed) {
        Ok(out_dir) => {
            println!("ok: outputs in {}", out_dir.display());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
