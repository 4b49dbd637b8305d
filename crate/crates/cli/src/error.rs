use hpc_core::classify::ClassifyError;
use hpc_core::estimands::EstimandError;
use hpc_core::io::IoError;
use hpc_core::model::ModelError;
use hpc_core::sampler::SamplerError;

#[derive(Debug)]
pub enum CliError {
    /// A check did not pass, or a computation failed.
    Failed(String),
    Config(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Failed(m) => write!(f, "{m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "input/output error: {m}"),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::Config(c) => CliError::Config(c.to_string()),
            SamplerError::Checkpoint(m) => CliError::Io(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParameter(m) => CliError::Config(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::EmptyValidation | ClassifyError::ShapeMismatch(_) => CliError::Io(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<EstimandError> for CliError {
    fn from(e: EstimandError) -> Self {
        match e {
            EstimandError::ListTooShort { .. } => CliError::Config(e.to_string()),
            EstimandError::ZeroDenominator { .. } | EstimandError::DimensionMismatch { .. } => {
                CliError::Io(e.to_string())
            }
            other => CliError::Failed(other.to_string()),
        }
    }
}
