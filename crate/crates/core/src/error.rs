use thiserror::Error;

/// Errors raised across planning, propagation and solving.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: String, actual: String },

    #[error("dense propagator needs {entries} entries, limit is {limit}")]
    TooLarge { entries: usize, limit: usize },

    #[error("dark trap {trap}: |E| = {amplitude:e} is below the floor {floor:e}")]
    DarkTrap {
        trap: usize,
        amplitude: f64,
        floor: f64,
    },

    #[error("infeasible assignment: {sources} sources for {targets} targets")]
    Infeasible { sources: usize, targets: usize },

    #[error("layer {layer}: {occupied} occupied sources for {targets} targets")]
    Underfilled {
        layer: usize,
        occupied: usize,
        targets: usize,
    },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("check failed: {0}")]
    Check(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("config write error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Innermost error, unwrapping frame context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Frame { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
