//! Configuration, orchestration and report plumbing for `ergolab`.

pub mod catalog;
pub mod commands;
pub mod config;
pub mod report;

use config::{Command, ExperimentConfig};
use ergolab_core::pressure::Verdict;
use report::{overall, Envelope, Meta};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("{0}")]
    Budget(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(path: &str, message: impl Into<String>) -> Self {
        Self::Config { path: path.into(), message: message.into() }
    }

    pub fn missing(path: &str) -> Self {
        Self::config(path, "required section is missing")
    }

    pub fn io(e: impl std::fmt::Display) -> Self {
        Self::Io(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Budget(_) => EXIT_BUDGET,
            Self::Compute(_) => EXIT_CHECK_FAILED,
            Self::Config { .. } | Self::Io(_) => EXIT_CONFIG,
        }
    }
}

impl From<ergolab_core::Error> for CliError {
    fn from(e: ergolab_core::Error) -> Self {
        match e {
            ergolab_core::Error::Budget { .. } => Self::Budget(e.to_string()),
            ergolab_core::Error::ScaleLadder(_) => Self::config("scales", e.to_string()),
            other => Self::Compute(other.to_string()),
        }
    }
}

pub fn exit_code(verdict: Verdict) -> i32 {
    if verdict.passed() {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    }
}

/// Execute `command` (or the config's own command) and wrap the outcome.
pub fn run(config: &ExperimentConfig, command: Option<Command>) -> Result<(Envelope, Vec<report::Table>), CliError> {
    let command = command.or(config.command).ok_or_else(|| CliError::missing("command"))?;
    let (start, started) = report::now();
    let outcome = commands::dispatch(command, config)?;
    let (end, finished) = report::now();
    let verdict = overall(&outcome.checks);
    let env = Envelope {
        meta: Meta {
            tool: "ergolab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            started,
            finished,
            elapsed_ms: (end - start).whole_milliseconds().max(0) as u128,
        },
        body: report::Body {
            command: command.name().into(),
            config_hash: config.hash(),
            config: config.clone(),
            verdict,
            checks: outcome.checks,
            results: outcome.results,
        },
    };
    Ok((env, outcome.tables))
}
