use std::path::PathBuf;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CRITERION_FAILED: i32 = 1;
pub const EXIT_INVALID_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unsupported format_version {found} (this build reads {supported})")]
    UnsupportedVersion { path: PathBuf, found: u64, supported: u64 },
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Train(#[from] bonbon_core::training::TrainError),
    #[error(transparent)]
    Sampling(#[from] bonbon_core::sampling::SamplingError),
    #[error(transparent)]
    Synth(#[from] bonbon_core::synth::SynthError),
    #[error(transparent)]
    Policy(#[from] bonbon_core::PolicyError),
    #[error(transparent)]
    Space(#[from] bonbon_core::SpaceError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        HarnessError::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Exit status for the CLI: malformed or missing inputs are 2, anything
    /// that fails while running is 1.
    pub fn exit_code(&self) -> i32 {
        use bonbon_core::training::TrainError;
        match self {
            HarnessError::Io { .. }
            | HarnessError::Parse { .. }
            | HarnessError::UnsupportedVersion { .. }
            | HarnessError::Spec(_)
            | HarnessError::Synth(_)
            | HarnessError::Space(_) => EXIT_INVALID_INPUT,
            HarnessError::Train(TrainError::Config(_) | TrainError::UnknownPrompt(_) | TrainError::InvalidRecord(_))
            | HarnessError::Train(TrainError::BetaStarUndefined(_) | TrainError::EmptyDataset) => EXIT_INVALID_INPUT,
            _ => EXIT_CRITERION_FAILED,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
