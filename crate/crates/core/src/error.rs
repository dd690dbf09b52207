use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("triangulation needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("all {0} points are collinear")]
    Collinear(usize),

    #[error("duplicate points at indices {first} and {second}")]
    DuplicatePoints { first: usize, second: usize },

    #[error("{block}: expected {expected} entries, got {got}")]
    LengthMismatch {
        block: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point projects behind the camera (camera-space depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("normal is not unit length (|n| = {norm})")]
    NonUnitNormal { norm: f64 },

    #[error("missing ids: {ids:?}")]
    MissingIds { ids: Vec<u32> },

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("non-finite loss at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 config/parse, 3 numerical failure, 4 contract violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Parse { .. } | Error::Config(_) | Error::Io(_) | Error::InvalidInput(_) => 2,
            Error::MissingIds { .. } | Error::LengthMismatch { .. } | Error::Empty(_) => 2,
            Error::Contract(_) | Error::NonUnitNormal { .. } => 4,
            _ => 3,
        }
    }
}
