use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate vector: norm {norm:e} is below {eps:e}")]
    DegenerateVector { norm: f64, eps: f64 },

    #[error("index {index} out of range for {len} classes")]
    Index { index: usize, len: usize },

    #[error("parameter `{0}` not found")]
    MissingParam(String),

    #[error("non-finite gradient in parameter `{0}`")]
    Divergence(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    LossDiverged { epoch: usize, batch: usize },

    #[error("invalid pair ({i}, {j})")]
    InvalidPair { i: usize, j: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("manifest is empty")]
    EmptyManifest,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("duplicate frame: class {class_id}, object {object_id}, video {video_id}, t={t}")]
    DuplicateFrame {
        class_id: u32,
        object_id: u32,
        video_id: u32,
        t: f64,
    },

    #[error("image file not found: {0}")]
    MissingImage(PathBuf),

    #[error("bad image file {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error("bounding box {0:?} does not intersect the image")]
    BoxOutsideImage([f64; 4]),

    #[error("time {t} outside interpolation interval ({t1}, {t2}]")]
    TimeRange { t: f64, t1: f64, t2: f64 },

    #[error("cannot split: class {class_id} has {count} objects, need more than {holdout}")]
    Split {
        class_id: u32,
        count: usize,
        holdout: usize,
    },

    #[error("fraction {0} outside (0, 1]")]
    Fraction(f64),

    #[error("no valid partner for anchor (class {class_id}, object {object_id}, video {video_id}, t={t})")]
    NoPartner {
        class_id: u32,
        object_id: u32,
        video_id: u32,
        t: f64,
    },

    #[error("batch needs {needed} anchors, manifest has {available}")]
    Batch { needed: usize, available: usize },

    #[error("unsupported frame rate {0}")]
    UnsupportedFps(f64),

    #[error("unknown {kind} `{value}`")]
    Unknown { kind: &'static str, value: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
