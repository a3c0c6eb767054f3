use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("{what} not strictly increasing at index {index}")]
    Ordering { what: &'static str, index: usize },

    #[error("time {t:.9} outside valid interval [{start:.9}, {end:.9}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("no overlap: {0}")]
    NoOverlap(String),

    #[error("low confidence: peak correlation {peak:.4} below {threshold}")]
    LowConfidence { peak: f64, threshold: f64 },

    #[error("degenerate motion: {0}")]
    DegenerateMotion(String),

    #[error("insufficient path: {0}")]
    InsufficientPath(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("scan at {start:.9}: {source}")]
    Scan {
        start: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Scan { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of an estimator on otherwise well-formed data
    /// (low correlation, degenerate excitation).
    pub fn is_algorithmic(&self) -> bool {
        matches!(
            self.root(),
            Error::LowConfidence { .. } | Error::DegenerateMotion(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
