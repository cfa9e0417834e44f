use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use bosonic::runner::{self, RunnerError};

#[derive(Parser)]
#[command(name = "bosonic", version, about = "Bosonic-mode SWAP-test clustering and classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its result files.
    Run {
        config: PathBuf,
        /// Overrides the config's `output_dir` and $BOSONIC_OUTPUT_DIR.
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Inspect the built-in dataset.
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
    /// Pulse schedules.
    Schedule {
        #[command(subcommand)]
        action: ScheduleAction,
    },
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Print the fifteen training states as JSON.
    Print,
}

#[derive(Subcommand)]
enum ScheduleAction {
    /// Print the pulse schedule for a target state.
    Show {
        /// A state spec as inline JSON or a path to a JSON file.
        target: String,
        #[arg(long, value_enum, default_value_t = Stark::Compensated)]
        stark: Stark,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stark {
    Compensated,
    Raw,
}

fn run(cli: Cli) -> Result<(), RunnerError> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let cfg = runner::load_config(&config)?;
            let dir = runner::resolve_output_dir(&cfg, output_dir.as_deref());
            let out = runner::run_to_dir(&cfg, &dir)?;
            println!("{} ({}) -> {}", cfg.kind(), out.files.len() + 1, dir.display());
            for (name, _) in &out.files {
                println!("  {name}");
            }
            println!("  manifest.json");
        }
        Command::Validate { config } => {
            let cfg = runner::load_config(&config)?;
            runner::validate(&cfg)?;
            println!("ok: {}", cfg.kind());
        }
        Command::Dataset { action: DatasetAction::Print } => print!("{}", runner::dataset_json()),
        Command::Schedule {
            action: ScheduleAction::Show { target, stark },
        } => {
            let text = if target.trim_start().starts_with('{') {
                target
            } else {
                std::fs::read_to_string(&target)
                    .map_err(|e| RunnerError::Parse(format!("cannot read {target}: {e}")))?
            };
            let trap = bosonic::pulse::TrapConfig::default();
            print!("{}", runner::schedule_json(&text, &trap, matches!(stark, Stark::Compensated))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
