//! Command-line front end: synthetic truth generation, observation, reconstruction runs and
//! spectrum comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod descriptor;
pub mod files;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<densrecon_core::Error> for CliError {
    fn from(e: densrecon_core::Error) -> Self {
        match e {
            densrecon_core::Error::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "densrecon", version, about = "Log-normal density reconstruction from masked count maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic log-normal density field.
    Synth {
        /// `A=<amplitude>,n=<index>[,k0=<freq>]` or `file:<spectrum.dmap>`.
        #[arg(long)]
        spectrum: String,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        /// `log:<n>` or `linear:<n>`.
        #[arg(long, default_value = "log:12")]
        bins: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Poisson-sample a density field through a mask.
    Observe {
        /// Directory written by `synth`, or a density map.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        mbar: f64,
        /// `none`, `random:<p>`, `box:<x>,<y>,<w>,<h>` or `file:<mask.dmap>`.
        #[arg(long, default_value = "none")]
        mask: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the reconstruction on an observation.
    Run {
        /// Directory written by `observe`.
        #[arg(long, required_unless_present = "manifest")]
        obs: Option<PathBuf>,
        /// `key=value` file.
        #[arg(long, conflicts_with = "manifest")]
        config: Option<PathBuf>,
        /// Manifest of an earlier run to reproduce.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the spectra of several runs against a truth.
    Compare {
        /// Directory written by `synth`, or its params file.
        #[arg(long)]
        truth: PathBuf,
        /// Also write low-pass maps keeping `|k| <= kmax` (cycles/pixel, or `nyquist`).
        #[arg(long)]
        kmax: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        estimates: Vec<PathBuf>,
    },
}

/// Parses `args` (program name first) and executes the command.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string()));
        }
    };
    match cli.command {
        Command::Synth { spectrum, size, seed, bins, out } => commands::cmd_synth(&spectrum, size, seed, &bins, &out),
        Command::Observe { truth, mbar, mask, seed, out } => commands::cmd_observe(&truth, mbar, &mask, seed, &out),
        Command::Run { obs, config, manifest, out } => match manifest {
            Some(m) => commands::cmd_rerun(&m, &out),
            None => {
                let obs = obs.ok_or_else(|| CliError::Usage("--obs is required".into()))?;
                commands::cmd_run(&obs, config.as_deref(), &out)
            }
        },
        Command::Compare { truth, kmax, out, estimates } => {
            commands::cmd_compare(&truth, &estimates, kmax.as_deref(), &out)
        }
    }
}
