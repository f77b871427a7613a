use thiserror::Error;

/// Errors raised while building, evaluating or differentiating a tape.
#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("unresolved parameter `{0}`")]
    UnresolvedParameter(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("shape {shape:?} holds {expected} values but {actual} were supplied")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("gradient output must be a scalar node, got {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },

    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
