use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// The variants line up with the CLI exit-code contract: `Config` is a usage
/// problem, `Format`/`Validation`/`Io` are data problems and `Numerical`
/// covers solver or training failures.
#[derive(Debug, Error)]
pub enum GzslError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error [{rule}]: {detail}")]
    Validation { rule: &'static str, detail: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error [{rule}]: {detail}")]
    Config { rule: String, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl GzslError {
    pub(crate) fn validation(rule: &'static str, detail: impl Into<String>) -> Self {
        GzslError::Validation {
            rule,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(rule: impl Into<String>, detail: impl Into<String>) -> Self {
        GzslError::Config {
            rule: rule.into(),
            detail: detail.into(),
        }
    }

    /// Name of the violated rule for validation and configuration errors.
    pub fn rule(&self) -> Option<&str> {
        match self {
            GzslError::Validation { rule, .. } => Some(rule),
            GzslError::Config { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, GzslError>;
