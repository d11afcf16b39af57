use std::io;

use thiserror::Error;

pub type Result<T, E = VtmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum VtmError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("channel count mismatch: {0}")]
    Mismatch(String),

    #[error("skeleton topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("bone {bone} of the reference skeleton has zero length")]
    ZeroBone { bone: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("point {index} lies behind the camera (z = {z})")]
    BehindCamera { index: usize, z: f64 },

    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("sequence has {frames} frames, need at least {needed}")]
    SequenceTooShort { frames: usize, needed: usize },

    #[error("frame {frame} is rank deficient")]
    DegenerateFrame { frame: usize },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl VtmError {
    /// Stable, machine-parseable code used as the CLI error prefix.
    pub fn code(&self) -> &'static str {
        match self {
            VtmError::Syntax { .. } => "E_SYNTAX",
            VtmError::Mismatch(_) => "E_MISMATCH",
            VtmError::TopologyMismatch(_) => "E_TOPOLOGY",
            VtmError::ZeroBone { .. } => "E_ZERO_BONE",
            VtmError::DegenerateInput(_) => "E_DEGENERATE_INPUT",
            VtmError::BehindCamera { .. } => "E_BEHIND_CAMERA",
            VtmError::NonPositiveDepth(_) => "E_NONPOSITIVE_DEPTH",
            VtmError::Shape(_) => "E_SHAPE",
            VtmError::SequenceTooShort { .. } => "E_SEQUENCE_TOO_SHORT",
            VtmError::DegenerateFrame { .. } => "E_DEGENERATE_FRAME",
            VtmError::Format(_) => "E_FORMAT",
            VtmError::Checkpoint(_) => "E_CHECKPOINT",
            VtmError::Config(_) => "E_CONFIG",
            VtmError::Io(_) => "E_IO",
        }
    }

    /// Wraps an I/O error with the path it concerns.
    pub fn io_at(path: &std::path::Path, e: io::Error) -> Self {
        VtmError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        VtmError::Shape(msg.into())
    }
}
