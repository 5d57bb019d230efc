use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmgate_cli::commands::load_config;
use mmgate_cli::{run, Command, Options};

#[derive(Parser)]
#[command(name = "mmgate", version, about = "Micromotion-aware two-ion phase gate design")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Use the static harmonic trap without micromotion.
    #[arg(long = "static", global = true)]
    static_trap: bool,
    /// Worker threads for scans.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Reserved. The tool uses no random numbers, so this flag is rejected.
    #[arg(long, global = true, hide = true)]
    seedless: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Print the derived trap parameters.
    Trap,
    /// Tabulate the mode functions and the micromotion phase.
    Modes,
    /// Design a segmented pulse and report its fidelity.
    Design,
    /// Scan the gate fidelity over the gate duration.
    Scan,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fail = |message: String, code: u8| {
        eprintln!("error: {message}");
        ExitCode::from(code)
    };
    if cli.seedless {
        return fail("--seedless is reserved; mmgate draws no random numbers".into(), 2);
    }
    let Some(path) = cli.config else {
        return fail("--config PATH is required".into(), 2);
    };
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let command = match cli.command {
        Sub::Trap => Command::Trap,
        Sub::Modes => Command::Modes,
        Sub::Design => Command::Design,
        Sub::Scan => Command::Scan,
    };
    let result = load_config(&path).and_then(|config| {
        run(
            command,
            &Options {
                config,
                out: cli.out,
                static_trap: cli.static_trap,
                workers,
            },
        )
    });
    match result {
        Ok(summary) => {
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            print!("{}", summary.stdout);
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.to_string(), e.exit_code() as u8),
    }
}
