use ldssl::experiment::ExperimentError;
use ldssl::network::NetworkError;
use ldssl::training::TrainError;
use ldssl::geometry::GeometryError;
use thiserror::Error;

/// A failure with the exit code it maps to and the module it came from.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("[{module}] {message}")]
    Config { module: &'static str, message: String },
    #[error("[{module}] {message}")]
    Data { module: &'static str, message: String },
    #[error("[{module}] {message}")]
    Diverged { module: &'static str, message: String },
    #[error("[io] {0}")]
    Io(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            module: "config",
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data {
            module: "data",
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Data { .. } => 3,
            CliError::Diverged { .. } => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ldssl::data::DataError> for CliError {
    fn from(e: ldssl::data::DataError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ldssl::eval::EvalError> for CliError {
    fn from(e: ldssl::eval::EvalError) -> Self {
        CliError::Data {
            module: "eval",
            message: e.to_string(),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        let message = e.to_string();
        match e {
            NetworkError::NonFiniteGradient => CliError::Diverged {
                module: "network",
                message,
            },
            NetworkError::Io(_) | NetworkError::Checkpoint(_) => CliError::Data {
                module: "network",
                message,
            },
            NetworkError::NonFiniteInput => CliError::Data {
                module: "network",
                message,
            },
            _ => CliError::Config {
                module: "network",
                message,
            },
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_divergence() {
            return CliError::Diverged {
                module: "training",
                message: e.to_string(),
            };
        }
        match e {
            TrainError::Config(message) => CliError::Config {
                module: "training",
                message,
            },
            TrainError::Data(e) => e.into(),
            TrainError::Network(e) => e.into(),
            TrainError::Pairing(e) => CliError::Data {
                module: "pairing",
                message: e.to_string(),
            },
            TrainError::Geometry(e @ GeometryError::InsufficientAnchors { .. }) => CliError::Config {
                module: "geometry",
                message: e.to_string(),
            },
            TrainError::Geometry(e) => CliError::Data {
                module: "geometry",
                message: e.to_string(),
            },
            TrainError::DivergedTraining(message) => CliError::Diverged {
                module: "training",
                message,
            },
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(message) => CliError::config(message),
            ExperimentError::Data(e) => e.into(),
            ExperimentError::Train(e) => e.into(),
            ExperimentError::Eval(e) => e.into(),
        }
    }
}
