//! Error-to-exit-code mapping.
//!
//! 0 ok, 2 network, 3 I/O, 4 data, 5 model, 64 usage.

use std::fmt;
use webaudit_core::cnn::CnnError;
use webaudit_core::config::ConfigError;
use webaudit_core::dataset::DatasetError;
use webaudit_core::evaluation::EvalError;
use webaudit_core::labeling::LabelingError;
use webaudit_core::probe::ProbeError;
use webaudit_core::svm::SvmError;

pub const EXIT_NETWORK: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_MODEL: i32 = 5;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> CliError {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> CliError {
        CliError::new(EXIT_USAGE, message)
    }

    pub fn data(message: impl Into<String>) -> CliError {
        CliError::new(EXIT_DATA, message)
    }

    pub fn io(message: impl Into<String>) -> CliError {
        CliError::new(EXIT_IO, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> CliError {
        let code = match &e {
            ProbeError::UnreachableHost(_)
            | ProbeError::Timeout(_)
            | ProbeError::ServiceUnavailable(_)
            | ProbeError::AccessDenied
            | ProbeError::BackendUnavailable(_) => EXIT_NETWORK,
            ProbeError::MalformedResponse(_) => EXIT_NETWORK,
            ProbeError::MissingFile(_) => EXIT_IO,
            ProbeError::UndecodableImage { .. } => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> CliError {
        let code = match &e {
            DatasetError::Io(_) | DatasetError::Csv(_) => EXIT_IO,
            DatasetError::SchemaViolation { .. }
            | DatasetError::EmptyDataset
            | DatasetError::DegenerateSplit(_) => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<LabelingError> for CliError {
    fn from(e: LabelingError) -> CliError {
        CliError::new(EXIT_DATA, e.to_string())
    }
}

impl From<SvmError> for CliError {
    fn from(e: SvmError) -> CliError {
        let code = match &e {
            SvmError::ModelFile(_) => EXIT_MODEL,
            SvmError::Io(_) => EXIT_IO,
            _ => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<CnnError> for CliError {
    fn from(e: CnnError) -> CliError {
        let code = match &e {
            CnnError::ModelFile(_) => EXIT_MODEL,
            CnnError::Io(_) => EXIT_IO,
            _ => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> CliError {
        CliError::new(EXIT_DATA, e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::usage(format!("config: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> CliError {
        CliError::io(e.to_string())
    }
}
