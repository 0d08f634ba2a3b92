use prism::eval::EvalError;
use prism::model::ModelError;
use prism::traces::TraceError;
use prism::training::TrainError;
use thiserror::Error;

/// Errors split by exit code: bad input exits 2, failures while running exit 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io(ref io) if io.kind() != std::io::ErrorKind::NotFound => CliError::Runtime(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::Checkpoint { .. } | ModelError::Dimension(_) => {
                CliError::Input(e.to_string())
            }
            ModelError::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => CliError::Input(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::EmptySplit(_) | TrainError::Format { .. } => {
                CliError::Input(e.to_string())
            }
            TrainError::Model(m) => m.into(),
            TrainError::Trace(t) => t.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Sizing(_) | EvalError::ConstantTarget | EvalError::Empty => CliError::Input(e.to_string()),
            EvalError::Train(t) => t.into(),
            EvalError::Model(m) => m.into(),
            EvalError::Trace(t) => t.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
