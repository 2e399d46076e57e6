use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::RigidPose;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point has non-positive camera depth {0}")]
    NonPositiveDepth(f64),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("object id {0} used more than once")]
    DuplicateObjectId(u32),

    #[error("no color lookup for object id {0}")]
    MissingLookup(u32),

    #[error("degenerate minimal configuration: {0}")]
    DegenerateConfiguration(&'static str),

    #[error("need at least 4 correspondences, got {0}")]
    InsufficientCorrespondences(usize),

    #[error("RANSAC found no valid hypothesis (best inlier count {best})")]
    NoValidHypothesis { best: usize },

    #[error("model renders to an empty map at the initial pose")]
    EmptyRender,

    #[error("refinement failed: {reason}")]
    RefinementFailed {
        last_pose: Box<RigidPose>,
        reason: String,
    },

    #[error("at most 10000 points are allowed, got {0}")]
    TooManyPoints(usize),

    #[error("probabilities at pixel {pixel} of {tensor} sum to {sum}")]
    UnnormalizedProbabilities {
        tensor: &'static str,
        pixel: usize,
        sum: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
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
