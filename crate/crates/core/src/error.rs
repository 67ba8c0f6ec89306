use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("band evaluation at r = {r} is outside the tabulated range [{lo}, {hi}]")]
    Extrapolation { r: f64, lo: f64, hi: f64 },

    #[error("band is not monotone: slope {slope} at r = {r}")]
    NonMonotoneBand { r: f64, slope: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("operator built for mesh {expected:016x} applied to mesh {found:016x}")]
    MeshMismatch { expected: u64, found: u64 },

    #[error("charge-neutral contact undefined: density {density} at the {side} contact")]
    ContactDensity { side: &'static str, density: f64 },

    #[error("non-finite value in cell (i={i}, k={k}, m={m}, p={p}) at t = {time}")]
    NonFinite {
        i: usize,
        k: usize,
        m: usize,
        p: usize,
        time: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("collision cache {path}: {msg}")]
    Cache { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } | Error::ContactDensity { .. } => 3,
            _ => 2,
        }
    }
}
