//! Batch front end for `epidiff`: reads a JSON problem file, runs one of the
//! `analyze`, `verify`, `certify` or `check-cq` commands and renders a report
//! as text followed by a JSON block.
//!
//! Exit codes: `0` all checks pass, `1` numerical disagreement or a negative
//! verdict, `2` precondition failure, `3` parse or validation error.

pub mod commands;
pub mod directions;
pub mod problem;
pub mod report;

use std::fmt::Display;

use thiserror::Error;

pub use problem::{Instance, ProblemFile};
pub use report::Report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("validation error in {field}: {message}")]
    Validation { field: String, message: String },
    #[error("{0}")]
    Calculus(#[from] epidiff::Error),
}

impl CliError {
    pub fn validation(field: &str, message: impl Display) -> Self {
        CliError::Validation { field: field.to_string(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        use epidiff::Error as E;
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Validation { .. } => 3,
            CliError::Calculus(e) => match e {
                E::InvalidInput(_) | E::DimensionMismatch { .. } | E::UnsupportedTag(_) | E::DimensionTooLarge { .. } => 3,
                E::NegativeInfinityDetected => 1,
                _ => 2,
            },
        }
    }

    /// Short diagnostic naming the failed precondition in mathematical terms.
    pub fn diagnostic(&self) -> String {
        match self {
            CliError::Calculus(epidiff::Error::EmptyMultiplierSet) => "v ∉ ∂f(x̄): the multiplier set is empty".into(),
            CliError::Calculus(epidiff::Error::NotStationary) => "0 ∉ ∇φ(x̄) + ∂(g∘F)(x̄): the base point is not stationary".into(),
            other => other.to_string(),
        }
    }
}
