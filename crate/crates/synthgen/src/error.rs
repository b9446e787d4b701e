use thiserror::Error;

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { path: String, expected: u32, found: u32 },

    #[error("{path}: file truncated ({missing} bytes missing)")]
    Truncated { path: String, missing: usize },

    #[error("image file has {images} entries but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("image {rows}x{cols} is smaller than the 28x28 minimum")]
    TooSmall { rows: usize, cols: usize },

    #[error("class {class} has {available} source images, {needed} needed")]
    InsufficientSources { class: u8, available: usize, needed: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("dataset format error: {0}")]
    Format(String),

    #[error(transparent)]
    Core(#[from] boltzlens_core::CoreError),

    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SynthError {
    /// Wraps an I/O error with the path it concerns.
    pub fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
        move |source| SynthError::File {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, SynthError::File { .. } | SynthError::Io(_) | SynthError::Core(boltzlens_core::CoreError::Io(_)))
    }
}
