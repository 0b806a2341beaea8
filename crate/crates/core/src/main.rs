use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Boundary steering experiments for the wave equation with memory.
#[derive(Parser)]
#[command(name = "memctrl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Print a config template for steer, regularity, riesz or zeta-convergence.
    PrintDefaultConfig { experiment: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run { config } => memctrl::cli::run(&config),
        Command::PrintDefaultConfig { experiment } => {
            match memctrl::cli::print_default_config(&experiment) {
                Ok(text) => {
                    println!("{text}");
                    0
                }
                Err(e) => {
                    eprintln!("memctrl: {e}");
                    1
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
