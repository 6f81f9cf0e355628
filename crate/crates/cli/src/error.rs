use pepscreen::eval::EvalError;
use pepscreen::features::FeatureError;
use pepscreen::learn::LearnError;
use pepscreen::{ClusterError, IngestError, LabelingError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config field '{field}': {message}")]
    Field { field: &'static str, message: String },
    #[error("{0}")]
    Data(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn field(field: &'static str, message: impl Into<String>) -> Self {
        CliError::Field {
            field,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Field { .. } => 1,
            CliError::Data(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Field { .. } => "config",
            CliError::Data(_) => "data",
            CliError::Invariant(_) => "invariant",
        }
    }

    /// One-line JSON error record for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: &'a str,
            #[serde(skip_serializing_if = "Option::is_none")]
            field: Option<&'a str>,
            message: String,
            exit_code: i32,
        }
        let field = match self {
            CliError::Field { field, .. } => Some(*field),
            _ => None,
        };
        serde_json::to_string(&Record {
            error: self.kind(),
            field,
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("plain record")
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(IngestError, LabelingError, FeatureError, ClusterError, EvalError);

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::InvalidParam(m) => CliError::field("models", m),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
