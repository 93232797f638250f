use std::fmt;

use calibfuse_core::calibration::CalibrationError;
use calibfuse_core::evaluation::EvaluationError;
use calibfuse_core::exchange::ExchangeError;
use calibfuse_core::fusion::FusionError;
use calibfuse_core::geometry::GeometryError;
use calibfuse_core::simulation::SimulationError;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Io = 1,
    Config = 2,
    Data = 3,
    Internal = 4,
}

/// Bad or missing settings that are not tied to a specific library error.
#[derive(Debug)]
pub struct ConfigError(pub String);

/// Input files that parse but are inconsistent with each other.
#[derive(Debug)]
pub struct DataError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}
impl std::error::Error for DataError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn data_err(msg: impl Into<String>) -> anyhow::Error {
    DataError(msg.into()).into()
}

fn fusion_kind(e: &FusionError) -> ExitKind {
    match e {
        FusionError::InvalidConfig(_) => ExitKind::Config,
        _ => ExitKind::Data,
    }
}

/// Walks the error chain and returns the kind of the first recognised error.
pub fn classify(err: &anyhow::Error) -> ExitKind {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return ExitKind::Config;
        }
        if cause.is::<DataError>() || cause.is::<serde_json::Error>() {
            return ExitKind::Data;
        }
        if cause.is::<std::io::Error>() {
            return ExitKind::Io;
        }
        if cause.is::<GeometryError>() {
            return ExitKind::Data;
        }
        // scenarios come from config files, so every simulation error is a config error
        if cause.is::<SimulationError>() {
            return ExitKind::Config;
        }
        if let Some(e) = cause.downcast_ref::<FusionError>() {
            return fusion_kind(e);
        }
        if let Some(e) = cause.downcast_ref::<CalibrationError>() {
            return match e {
                CalibrationError::Io(_) => ExitKind::Io,
                _ => ExitKind::Data,
            };
        }
        if let Some(e) = cause.downcast_ref::<ExchangeError>() {
            return match e {
                ExchangeError::Io(_) => ExitKind::Io,
                _ => ExitKind::Data,
            };
        }
        if let Some(e) = cause.downcast_ref::<EvaluationError>() {
            return match e {
                EvaluationError::Io(_) => ExitKind::Io,
                EvaluationError::Fusion(f) => fusion_kind(f),
                _ => ExitKind::Data,
            };
        }
    }
    ExitKind::Internal
}
