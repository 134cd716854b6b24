use std::fmt;
use std::process::ExitCode;

use reclass_core::analysis::AnalysisError;
use reclass_core::estimation::EstimationError;
use reclass_core::io::IoError;
use reclass_core::model::ModelError;
use reclass_core::simulator::SimError;
use reclass_core::snapshots::SnapshotError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validation,
    Numerical,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Validation => 1,
            Kind::Numerical => 2,
            Kind::Io => 3,
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Validation,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Numerical,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn csv_kind(e: &csv::Error) -> Kind {
    if e.is_io_error() {
        Kind::Io
    } else {
        Kind::Validation
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let kind = match e {
            ModelError::NoSignChange { .. }
            | ModelError::InconsistentGrowth { .. }
            | ModelError::BeyondSingularity { .. } => Kind::Numerical,
            _ => Kind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let kind = match e {
            SimError::Overflow { .. } => Kind::Numerical,
            _ => Kind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        let kind = match &e {
            EstimationError::Failed(_) => Kind::Numerical,
            EstimationError::Model(m) => return CliError::from(m.clone()),
            _ => Kind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        let kind = match &e {
            SnapshotError::Io { .. } => Kind::Io,
            SnapshotError::Csv(c) => csv_kind(c),
            _ => Kind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let kind = match &e {
            IoError::Io { .. } => Kind::Io,
            IoError::Csv(c) => csv_kind(c),
            _ => Kind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        let kind = match &e {
            AnalysisError::RankDeficient { .. } | AnalysisError::ZeroVariance | AnalysisError::NonFinite => {
                Kind::Numerical
            }
            _ => Kind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
