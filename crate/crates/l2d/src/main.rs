use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l2d::commands::{self, Completed};
use l2d::config::{self, BoundsConfig, ExperimentConfig, GradcheckConfig, OracleConfig};
use l2d::error::Result;
use l2d::experiments;
use l2d::output::OutDir;
use l2d::CliError;

/// Surrogate checks, Bayes oracles, bound verification and deferral
/// experiments driven by JSON configs.
///
/// Exit codes: 0 success, 1 IO error, 2 config error, 3 property
/// violation, 4 inconclusive.
#[derive(Parser)]
#[command(name = "l2d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Progress on standard error.
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference check of surrogate gradients.
    Gradcheck(Common),
    /// Bayes decisions, risks and minimizability gaps.
    Oracle(Common),
    /// Numeric verification of consistency bounds.
    Bounds(Common),
    /// Training experiments over seeds and expert counts.
    Experiment(Common),
}

fn run(cmd: &Command) -> Result<Completed> {
    let (Command::Gradcheck(c) | Command::Oracle(c) | Command::Bounds(c) | Command::Experiment(c)) = cmd;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        // Parse and validate everything before creating any output.
        match cmd {
            Command::Gradcheck(_) => {
                let cfg: GradcheckConfig = config::load(&c.config)?;
                cfg.validate()?;
                commands::gradcheck(&cfg, &OutDir::create(&c.out)?)
            }
            Command::Oracle(_) => {
                let cfg: OracleConfig = config::load(&c.config)?;
                cfg.validate()?;
                commands::oracle(&cfg, &OutDir::create(&c.out)?)
            }
            Command::Bounds(_) => {
                let cfg: BoundsConfig = config::load(&c.config)?;
                cfg.validate()?;
                commands::bounds(&cfg, &OutDir::create(&c.out)?)
            }
            Command::Experiment(_) => {
                let cfg: ExperimentConfig = config::load(&c.config)?;
                cfg.task.validate()?;
                experiments::experiment(&cfg, &OutDir::create(&c.out)?, c.verbose)
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(done) => {
            println!("{}", done.summary);
            ExitCode::from(done.outcome.code())
        }
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.code())
        }
    }
}
