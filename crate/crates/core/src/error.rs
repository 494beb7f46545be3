use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the restoration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("kernel {kw}x{kh} too large for {width}x{height} plane")]
    KernelTooLarge {
        kw: usize,
        kh: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch((usize, usize), (usize, usize)),
    #[error("image too small: need min side >= {min}, got {width}x{height}")]
    ImageTooSmall {
        min: usize,
        width: usize,
        height: usize,
    },
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("source set is empty: {0}")]
    EmptySourceSet(PathBuf),
    #[error("corpus too small: need at least {needed} images, found {found}")]
    CorpusTooSmall { needed: usize, found: usize },
    #[error("calibration model missing: {0}")]
    ModelMissing(&'static str),
    #[error("calibration missing or invalid: {0}")]
    CalibrationMissing(String),
    #[error("quality score requires slots that are not present: {0}")]
    MissingSlots(&'static str),
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("no sample carries label bit {0}")]
    EmptyClass(usize),
    #[error("unknown tool '{tool_id}' for task {task}")]
    UnknownTool { task: String, tool_id: String },
    #[error("too many tasks for exhaustive search: {0} (max 4)")]
    TooManyTasks(usize),
    #[error("strategy needs a degradation recipe")]
    MissingRecipe,
    #[error("perceiver transport error: {0}")]
    Transport(String),
    #[error("malformed perceiver answer: {0}")]
    MalformedAnswer(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
