use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Parse,
    Validation,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Io => 1,
            ErrorClass::Parse => 2,
            ErrorClass::Validation => 3,
            ErrorClass::Numerical => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::Io => "io",
            ErrorClass::Parse => "parse",
            ErrorClass::Validation => "validation",
            ErrorClass::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("tristimulus component {component} is {value}; components must be finite and non-negative")]
    InvalidComponent { component: char, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("direction vector has norm {norm}, expected a unit vector")]
    NonUnitVector { norm: f64 },

    #[error("reference whites differ: {0:?} vs {1:?}")]
    MismatchedWhite([f64; 3], [f64; 3]),

    #[error("samples have zero variance")]
    ZeroVariance,

    #[error("perpendicular directions show zero variance; anisotropy ratio undefined")]
    ZeroPerpendicularVariance,

    #[error("invalid noise model: {0}")]
    InvalidModel(String),

    #[error("source colors span only {rank} dimension(s); at least 3 linearly independent measurements are required")]
    RankDeficient { rank: usize },

    #[error("normal matrix is ill-conditioned (condition number {condition:.3e} exceeds {limit:.1e})")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("unknown color id `{0}`")]
    UnknownColor(String),

    #[error("insufficient repeats (need >= 2) in groups: {0}")]
    InsufficientRepeats(String),

    #[error("too few panels for color `{color}`: need at least 2, got {got}")]
    TooFewPanels { color: String, got: usize },

    #[error("missing timestamps for {0}")]
    MissingTimestamps(String),

    #[error("{path}: line {line}, column {column}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        reason: String,
    },

    #[error("{path}: line {line}: {reason}")]
    InvalidRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Parse { .. } => ErrorClass::Parse,
            Error::InvalidComponent { .. }
            | Error::Empty(_)
            | Error::TooFewSamples { .. }
            | Error::NonUnitVector { .. }
            | Error::MismatchedWhite(..)
            | Error::InvalidModel(_)
            | Error::UnknownColor(_)
            | Error::InsufficientRepeats(_)
            | Error::TooFewPanels { .. }
            | Error::MissingTimestamps(_)
            | Error::InvalidRow { .. }
            | Error::Validation(_) => ErrorClass::Validation,
            Error::Degenerate(_)
            | Error::ZeroVariance
            | Error::ZeroPerpendicularVariance
            | Error::RankDeficient { .. }
            | Error::IllConditioned { .. } => ErrorClass::Numerical,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
