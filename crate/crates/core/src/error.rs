use std::path::PathBuf;

use thiserror::Error;

use crate::certificates::Rejection;
use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid problem specification: {}", format_violations(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("singular Jacobian at node {node} (r = {r:.6e}); try a finer grid")]
    Singular { node: usize, r: f64 },

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("certificate rejected: {0}")]
    Rejected(Rejection),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. }
                | Error::NotConverged(_)
                | Error::Rejected(_)
                | Error::Fit(_)
                | Error::Simulation(_)
                | Error::Construction(_)
        )
    }
}
