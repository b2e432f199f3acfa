use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("value {value} out of range [0, 1] in {context}")]
    OutOfRange { context: &'static str, value: f64 },

    #[error("normal at pixel {index} has norm {norm}, expected 1 within 1e-6")]
    NonUnitNormal { index: usize, norm: f64 },

    #[error("degenerate extent {width}x{height}: {reason}")]
    Degenerate {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("empty mask in {0}")]
    EmptyMask(&'static str),

    #[error("empty set in {0}")]
    EmptySet(&'static str),

    #[error("rank-deficient design matrix (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("too few masked pixels for light estimation: {count} < 9")]
    TooFewPixels { count: usize },

    #[error("vector too short to normalize (norm {0:e})")]
    ZeroVector(f64),

    #[error("non-finite loss term `{term}`")]
    NanTerm { term: String },

    #[error("non-finite objective at iteration {iteration} in term `{term}`")]
    NanObjective { iteration: usize, term: String },

    #[error("non-finite gradient in layer `{layer}`")]
    NanGradient { layer: String },

    #[error("non-finite parameter in layer `{layer}`")]
    NanParameter { layer: String },

    #[error("training diverged at epoch {epoch}: loss {loss} exceeds the divergence bound (initial {initial})")]
    Diverged { epoch: usize, loss: f64, initial: f64 },

    #[error("gradient check failed for {0}")]
    GradientCheck(String),

    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("unsupported image: {0}")]
    Unsupported(String),

    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Png {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            reason: reason.into(),
        }
    }

    /// Whether this error stems from invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Format { .. } | Error::Config(_) | Error::UnknownFactor(_) | Error::Json(_)
        )
    }
}
