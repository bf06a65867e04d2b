use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point behind camera (z = {0})")]
    BehindCamera(f64),
    #[error("non-positive decoded depth (z = {0})")]
    NonPositiveDepth(f64),
    #[error("projected center outside image: ({0}, {1})")]
    OutsideImage(f64, f64),
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid calibration: {0}")]
    InvalidCalib(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("index out of bounds: {0}")]
    OutOfBounds(String),
    #[error("empty stratum: no ground truth to evaluate")]
    EmptyStratum,
    #[error("non-finite loss at probe point (coordinate {0})")]
    NonFiniteLoss(usize),
    #[error("step size too large: loss diverged to {0}")]
    Diverged(f64),
    #[error("scene generation exhausted {0} retries")]
    RetriesExhausted(usize),
    #[error("line {line}: expected 15 or 16 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: field `{field}` is not a valid number: {value:?}")]
    InvalidField {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("calibration: {0}")]
    CalibFormat(String),
    #[error("split: {0}")]
    SplitFormat(String),
    #[error("missing frame {frame:06} in {dir}")]
    MissingFrame { frame: u32, dir: PathBuf },
    #[error("correctness gate failed: sparse and dense paths differ by {0:e}")]
    CorrectnessGate(f64),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
