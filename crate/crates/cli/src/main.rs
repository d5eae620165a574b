use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fockforge_cli::{run, CliError, Command, Context, Format, Formats, Mode, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "fockforge", version, about = "Hybrid squeezer / two-level-system Fock state simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (default `fockforge-out`; `estimate` writes files
    /// only when given).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for sweeps.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Photon-number cutoff per mode.
    #[arg(long, global = true, value_name = "N")]
    cutoff: Option<usize>,

    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,

    /// Output formats, comma separated (default csv,json).
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    format: Vec<Format>,

    /// Print the resolved canonical configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Time evolution of one pulse sequence.
    Simulate,
    /// Grid search over pulse parameters.
    Sweep,
    /// Target probability against the cutoff.
    Converge,
    /// Rabi frequency, quality and Purcell factors from emitter data.
    Estimate,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Sweep => Command::Sweep,
        Cmd::Converge => Command::Converge,
        Cmd::Estimate => Command::Estimate,
    };
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let config = base.resolve(
        command,
        Overrides {
            cutoff: cli.cutoff,
            mode: cli.mode,
            workers: cli.workers,
        },
    )?;
    if cli.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let out = match (command, cli.out) {
        (_, Some(dir)) => Some(dir),
        (Command::Estimate, None) => None,
        (_, None) => Some(PathBuf::from("fockforge-out")),
    };
    let ctx = Context {
        command,
        config,
        out,
        formats: Formats::from_list(&cli.format),
    };
    let report = run(&ctx)?;
    for line in &report.lines {
        println!("{line}");
    }
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
