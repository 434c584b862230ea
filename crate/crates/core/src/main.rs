use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracneumann::cli::{exit_code, run_file, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Experiments for the fractional Neumann problem")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
    /// List the available experiments.
    ListExperiments,
}

fn main() -> ExitCode {
    env_logger::init();
    let code = match Args::parse().command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<20} {}", e.name(), e.summary());
            }
            0
        }
        Command::Validate { config } => match ExperimentConfig::from_file(&config) {
            Ok(cfg) => {
                print!("{}", cfg.echo_text());
                0
            }
            Err(e) => {
                eprintln!("{e}");
                2
            }
        },
        Command::Run { config } => {
            let result = run_file(&config);
            match &result {
                Ok(rep) => {
                    for (k, v) in &rep.verdicts {
                        println!("{:<28} {} value={:e} tol={:e}", k, if v.pass { "PASS" } else { "FAIL" }, v.value, v.tolerance);
                    }
                    if let Some(e) = &rep.error {
                        eprintln!("error: {e}");
                    }
                    println!("{} in {:.2} s", if rep.pass { "PASS" } else { "FAIL" }, rep.wall_time_s);
                }
                Err(e) => eprintln!("{e}"),
            }
            exit_code(&result)
        }
    };
    ExitCode::from(code as u8)
}
