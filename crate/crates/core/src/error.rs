use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{op}: dimension mismatch on {axis}: expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("tensor shape {shape:?} holds {expected} elements but {found} values were supplied")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },

    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("trace does not match network: {0}")]
    StaleTrace(String),

    #[error("layer {layer} is not a {expected} layer")]
    WrongLayerKind { layer: usize, expected: &'static str },

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("bin edges differ between distributions")]
    EdgeMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn dim(op: &'static str, axis: &'static str, expected: usize, found: usize) -> Self {
        CoreError::Dimension {
            op,
            axis,
            expected,
            found,
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        CoreError::Invalid { op, msg: msg.into() }
    }
}
