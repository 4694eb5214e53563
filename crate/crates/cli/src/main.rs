use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spme_cli::experiment::Status;
use spme_cli::scenario::parse_scenario;
use spme_cli::study::refinement_study;
use spme_cli::{exit_code, run_files, scenario_files, FileOutcome, DEFAULT_OUT};

#[derive(Parser)]
#[command(name = "spme", version, about = "Coupled porous medium system: scenario runs and refinement studies")]
struct Cli {
    /// Output root; each scenario writes into `<out>/<name>/`.
    #[arg(long, global = true, env = "SPME_OUT", default_value = DEFAULT_OUT)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenario files and evaluate their checks.
    Run {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Error table of a scenario with a closed-form solution under grid refinement.
    Study {
        file: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Run every `*.cfg` file of a directory.
    VerifyAll {
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

fn report(outcomes: &[FileOutcome]) -> ExitCode {
    for o in outcomes {
        match o.status {
            Status::ConfigError => eprintln!("CONFIG ERROR {}", o.message),
            _ => println!("{}", o.message),
        }
    }
    ExitCode::from(exit_code(outcomes) as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { files, jobs } => report(&run_files(&files, &cli.out, jobs)),
        Command::VerifyAll { dir, jobs } => match scenario_files(&dir) {
            Ok(files) if files.is_empty() => {
                eprintln!("{}: no .cfg files", dir.display());
                ExitCode::from(Status::ConfigError.exit_code() as u8)
            }
            Ok(files) => report(&run_files(&files, &cli.out, jobs)),
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                ExitCode::from(Status::ConfigError.exit_code() as u8)
            }
        },
        Command::Study { file, levels } => {
            let scenario = match parse_scenario(&file) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("CONFIG ERROR {e}");
                    return ExitCode::from(Status::ConfigError.exit_code() as u8);
                }
            };
            match refinement_study(&scenario, levels) {
                Ok(table) => {
                    let csv = table.to_csv();
                    print!("{csv}");
                    let dir = cli.out.join(scenario.output_name());
                    let path = dir.join("refinement.csv");
                    if let Err(e) = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(&path, csv)) {
                        eprintln!("{}: {e}", path.display());
                        return ExitCode::from(Status::ConfigError.exit_code() as u8);
                    }
                    ExitCode::SUCCESS
                }
                Err(e @ (spme_cli::study::StudyError::Solver(_) | spme_cli::study::StudyError::Travelling(_))) => {
                    eprintln!("NUMERICAL FAILURE {e}");
                    ExitCode::from(Status::NumericalFailure.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("CONFIG ERROR {e}");
                    ExitCode::from(Status::ConfigError.exit_code() as u8)
                }
            }
        }
    }
}
