use std::path::Path;

use thiserror::Error;

/// Failures mapped onto the process exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {source}")]
    Numerical {
        #[source]
        source: rscm_core::Error,
    },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// 2 config, 3 numerical, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    /// Last iterate carried by a solver failure, if any.
    pub fn last_iterate(&self) -> Option<&[f64]> {
        match self {
            CliError::Numerical {
                source: rscm_core::Error::Diverged { last_iterate, .. } | rscm_core::Error::NonConvergence { last_iterate, .. },
            } => Some(last_iterate),
            _ => None,
        }
    }
}

impl From<rscm_core::Error> for CliError {
    fn from(e: rscm_core::Error) -> Self {
        use rscm_core::Error as E;
        match e {
            E::Config(m) => CliError::Config(m),
            E::Domain(m) => CliError::Config(m),
            E::Dimension { expected, found } => {
                CliError::Config(format!("dimension mismatch: expected {expected}, found {found}"))
            }
            other => CliError::Numerical { source: other },
        }
    }
}
