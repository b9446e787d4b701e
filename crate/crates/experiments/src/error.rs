use thiserror::Error;

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),

    #[error("dataset does not fit the network: {0}")]
    DataMismatch(String),

    #[error("index {index} out of range for the {split} split ({len} samples)")]
    IndexOutOfRange { index: usize, split: String, len: usize },

    #[error(transparent)]
    Core(#[from] boltzlens_core::CoreError),

    #[error(transparent)]
    Synth(#[from] boltzlens_synth::SynthError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Whether the failure came from reading or writing files.
    pub fn is_io(&self) -> bool {
        match self {
            ExperimentError::Io(_) => true,
            ExperimentError::Core(boltzlens_core::CoreError::Io(_)) => true,
            ExperimentError::Synth(e) => e.is_io(),
            _ => false,
        }
    }
}
