//! Experiment harness: configuration, campaigns, result files, self-test.

mod campaign;
mod config;
mod output;
mod selftest;

use std::path::PathBuf;

use thiserror::Error;

pub use campaign::{
    run_campaign, BranchRow, ConfigEcho, DecoyRow, ResultRecord, Rows, Summary, SweepRow, TrialRow,
};
pub use config::{
    load_config, load_config_str, parse_raw, random_coeffs, AbortPolicy, BetaSource, BetaSpec,
    CoeffsSpec, Engine, ExperimentConfig, Format, Kind, RawConfig, DEFAULT_ABORT_MIN_CHECKS,
    DEFAULT_TRIALS,
};
pub use output::{render, write_atomic, write_record};
pub use selftest::{run_selftest, Check};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config field `{field}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
    #[error(transparent)]
    Sim(#[from] crate::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot encode results: {0}")]
    Encode(String),
}

impl HarnessError {
    /// Process exit status: 2 for resource guards, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Sim(e) if e.is_guard() => 2,
            _ => 1,
        }
    }
}
