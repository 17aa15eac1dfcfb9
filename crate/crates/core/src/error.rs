use std::path::PathBuf;

use thiserror::Error;

use crate::equilibrium::ReferencePoint;

/// Identifies a player in the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Agent {
    Follower(usize),
    Leader,
}

impl std::fmt::Display for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Agent::Follower(n) => write!(f, "follower {n}"),
            Agent::Leader => write!(f, "leader"),
        }
    }
}

/// Failure reported by a caller-supplied sub-gradient evaluator.
#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct OracleError(pub String);

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("oracle for {agent} failed at {location}: {source}")]
    Oracle {
        agent: Agent,
        location: String,
        #[source]
        source: OracleError,
    },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("reference solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<ReferencePoint>,
    },

    #[error("configuration error:\n{}", format_field_errors(.0))]
    Config(Vec<FieldError>),

    #[error("run {run_id} failed: {source}")]
    Run {
        run_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A single configuration problem, addressed by its dotted path in the scenario document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn format_field_errors(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
