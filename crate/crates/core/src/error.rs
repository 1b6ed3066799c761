use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: bad magic {found:?}, expected \"NWG1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u8 },
    #[error("{path}: payload truncated, header declares {expected} bytes but {found} are present")]
    TruncatedPayload {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("{path}: unknown grid kind code {code}")]
    UnknownKind { path: PathBuf, code: u8 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("padding {pad} too large for a {height}x{width} grid")]
    PadTooLarge {
        pad: usize,
        height: usize,
        width: usize,
    },
    #[error("cannot crop {height}x{width} to {target_h}x{target_w}")]
    BadTarget {
        height: usize,
        width: usize,
        target_h: usize,
        target_w: usize,
    },
    #[error("invalid display range [{lo}, {hi}]")]
    BadRange { lo: f32, hi: f32 },
    #[error("invalid channel selection: {0}")]
    BadSelection(String),
    #[error("channel {0} has zero variance")]
    ConstantChannel(String),
    #[error("histogram is degenerate (constant input)")]
    DegenerateHistogram,
    #[error("expected grid kind {expected}, got {found}")]
    WrongKind {
        expected: &'static str,
        found: crate::grid::GridKind,
    },
    #[error("stacks are not aligned: {0}")]
    Misaligned(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("sparse flow has no entries")]
    EmptySparse,
    #[error("RBF system is singular")]
    SingularSystem,
    #[error("pairwise flows were not computed on a common feature set")]
    InconsistentFeatures,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("fair CRPS estimator needs at least two ensemble members")]
    FairNeedsTwo,
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
