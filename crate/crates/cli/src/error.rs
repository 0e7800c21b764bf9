use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] cfb_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("plot input {path} does not match the preset schema: {reason}")]
    Schema { path: PathBuf, reason: String },

    #[error("malformed record: {0}")]
    Record(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 instability or infeasibility,
    /// 4 numerical failure, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        use cfb_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Schema { .. } => 2,
            CliError::Core(e) => match e {
                E::InvalidParameter { .. } | E::DegenerateLoop { .. } | E::Precondition(_) | E::OutOfValidity(_) => 2,
                E::Unstable(_) | E::Marginal { .. } | E::Infeasible(_) => 3,
                E::SingularResponse { .. }
                | E::QuadratureNonConvergence { .. }
                | E::Unphysical { .. }
                | E::LinearAlgebra(_) => 4,
            },
            CliError::Io { .. } | CliError::Record(_) => 1,
        }
    }
}
