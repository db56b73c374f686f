//! Driver for fitting, searching, simulating and scoring matrix variate
//! factor analyzer mixtures from the command line.

pub mod args;
pub mod config;
pub mod io;
pub mod reports;
pub mod run;
pub mod supervision;

use std::process::ExitCode;

pub use config::{Command, RunConfig};
pub use run::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Args(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for argument or configuration errors, 3 for data errors, 4 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Args(_) | CliError::Io(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<matfa::Error> for CliError {
    fn from(e: matfa::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            match e.root() {
                matfa::Error::Dimension(_) => CliError::Data(e.to_string()),
                _ => CliError::Args(e.to_string()),
            }
        }
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match args::parse(args) {
        Ok(Some(c)) => c,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    match run(&config) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
