use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid landmarks: {0}")]
    InvalidLandmarks(String),
    #[error("aligned face exceeds frame by {frac:.1}% (limit 20%)")]
    AlignmentOutOfFrame { frac: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("histogram binning mismatch")]
    BinningMismatch,
    #[error("histogram not normalized (sum = {0})")]
    Unnormalized(f64),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("zero vector where a nonzero latent is required")]
    ZeroVector,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("degenerate reference set: all raw scores equal")]
    DegenerateReferenceSet,
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("training diverged (non-finite loss) at {images_seen} images")]
    TrainingDiverged { images_seen: u64 },
    #[error("dataset too small: {got} images, need at least {need}")]
    DatasetTooSmall { need: usize, got: usize },
    #[error("unknown severity scorer: {0}")]
    UnknownScorer(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image decode/encode error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
