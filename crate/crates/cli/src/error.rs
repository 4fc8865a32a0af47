//! Error classes and their exit codes.

use std::fmt;
use std::path::Path;

use snmnn::config::ConfigError;
use snmnn::fixtures::FixtureError;
use snmnn::flightlog::LogError;
use snmnn::fusion::FusionError;
use snmnn::geodesy::GeodesyError;
use snmnn::mnn::FormatError;
use snmnn::trainer::TrainError;
use snmnn::uav_sim::SimError;
use snmnn::MnnError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or out-of-range settings.
    Usage(String),
    /// Missing, unreadable or malformed input.
    Data(String),
    /// Divergence or non-finite values during the computation.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Data(m) => write!(f, "data error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => Self::Data(e.to_string()),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Self::Usage(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => Self::Usage(e.to_string()),
            TrainError::EmptyData => Self::Data(e.to_string()),
            TrainError::Network(_) | TrainError::NonFinite { .. } => Self::Numerical(e.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::Config(_) | FusionError::Sigma(_) => Self::Usage(e.to_string()),
            FusionError::Log | FusionError::TimeStep(_) | FusionError::Quaternion(_) => {
                Self::Data(e.to_string())
            }
            FusionError::Geodesy(_) | FusionError::Network(_) => Self::Numerical(e.to_string()),
        }
    }
}

impl From<GeodesyError> for CliError {
    fn from(e: GeodesyError) -> Self {
        match e {
            GeodesyError::OutOfRange(_) => Self::Usage(e.to_string()),
            GeodesyError::NearGeocenter(_) => Self::Numerical(e.to_string()),
        }
    }
}

impl From<FixtureError> for CliError {
    fn from(e: FixtureError) -> Self {
        match e {
            FixtureError::Sim(s) => s.into(),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<MnnError> for CliError {
    fn from(e: MnnError) -> Self {
        Self::Usage(e.to_string())
    }
}

pub fn log_error(path: &Path, e: LogError) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn format_error(path: &Path, e: FormatError) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
