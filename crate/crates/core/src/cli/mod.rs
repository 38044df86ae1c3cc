//! Command-line surface: configuration, file formats and the batch commands.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod model_file;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use commands::{cmd_curve, cmd_generate, cmd_predict, cmd_train_base, cmd_transfer};
pub use config::RunConfig;
pub use model_file::{load_model, save_model, ModelFile};

use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "transcal", version, about = "Calibrate simulation observables against experiments by transfer learning")]
pub struct Cli {
    /// Flat key=value config file
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,

    /// Override a config key (repeatable), e.g. --set seed=7
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write sim_database.csv and shots.csv
    Generate,
    /// Train the base autoencoder on the simulation database
    TrainBase,
    /// Retrain the decoder tail on experiments and score the holdout
    Transfer,
    /// Write the holdout learning curve as experiments are added
    Curve,
    /// Print the calibrated prediction for one simulation-output vector
    Predict {
        /// bang_time burnwidth log10_yield_dt tion_dt log10_yield_dd tion_dd dsr
        #[arg(num_args = 7, required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg, out),
        Command::TrainBase => cmd_train_base(&cfg, out),
        Command::Transfer => cmd_transfer(&cfg, out),
        Command::Curve => cmd_curve(&cfg, out),
        Command::Predict { values } => cmd_predict(&cfg, values, out),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK {
                write!(out, "{}", e.render())
            } else {
                write!(err, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
