use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("joint {joint}: angle {value} outside limits [{lo}, {hi}]")]
    JointLimit { joint: usize, value: f64, lo: f64, hi: f64 },

    #[error("point is behind the camera (z = {0} mm)")]
    BehindCamera(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(
        "rejection sampling stalled: {accepted} of {proposals} proposals accepted \
         (prior misconfiguration?) {detail}"
    )]
    AcceptanceTooLow {
        accepted: usize,
        proposals: usize,
        detail: String,
    },

    #[error("enumerating {count} cascade instantiations exceeds the cap of {cap}; use sampled mode")]
    EnumerationTooLarge { count: u128, cap: u128 },

    #[error("unsupported {what} format version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed PGM: {reason}")]
    Pgm { path: PathBuf, reason: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 validation, 2 I/O, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::JointLimit { .. }
            | Error::BehindCamera(_)
            | Error::Invalid(_)
            | Error::Version { .. }
            | Error::AcceptanceTooLow { .. }
            | Error::EnumerationTooLarge { .. } => 1,
            Error::Io { .. } | Error::Pgm { .. } | Error::Json { .. } => 2,
            Error::Internal(_) => 3,
        }
    }
}
