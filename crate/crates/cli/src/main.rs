use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lrtc_cli::config::{ConfigError, Overrides, Settings};
use lrtc_cli::experiments;

/// Tensor completion experiments: synthetic sweeps, a step-size study and
/// image inpainting.
#[derive(Parser)]
#[command(name = "lrtc", version, about)]
struct Cli {
    /// Key-value configuration file (TOML); flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Random completion instances of one setting, solved over many trials
    Synthetic,
    /// Iteration/error study over a list of step sizes
    TauSweep,
    /// Inpainting of a rank-reduced image from partial pixels
    Image,
    /// Write the built-in synthetic test image
    GenImage {
        /// Image side length in pixels
        #[arg(long, default_value_t = 512)]
        size: usize,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version through this path as well
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let settings = match Settings::resolve(cli.config.as_deref(), &cli.overrides) {
        Ok(s) => s,
        Err(ConfigError(msg)) => {
            eprintln!("configuration error: {msg}");
            return ExitCode::from(1);
        }
    };

    let run = || -> anyhow::Result<()> {
        match cli.command {
            Command::Synthetic => {
                experiments::run_synthetic(&settings)?;
            }
            Command::TauSweep => {
                experiments::run_tau_sweep(&settings)?;
            }
            Command::Image => {
                experiments::run_image(&settings)?;
            }
            Command::GenImage { size } => {
                experiments::run_gen_image(&settings, size)?;
            }
        }
        Ok(())
    };

    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
