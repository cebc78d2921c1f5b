use std::fmt;

use densekit::asa::AsaError;
use densekit::corpus::CorpusError;
use densekit::gsa::GsaError;
use densekit::metrics::MetricsError;
use densekit::resample::ResampleError;
use densekit::wom::WomError;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Backend(_) => "backend",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Backend(m) => m,
        }
    }

    /// The structured form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.message(), "exit_code": self.exit_code() } })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(CorpusError, MetricsError, ResampleError, AsaError, std::io::Error);

impl From<GsaError> for CliError {
    fn from(e: GsaError) -> Self {
        match e {
            GsaError::Evaluation { .. } => CliError::Backend(e.to_string()),
            GsaError::InvalidParameter(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<WomError> for CliError {
    fn from(e: WomError) -> Self {
        match e {
            WomError::Backend(_) | WomError::Aborted { .. } => CliError::Backend(e.to_string()),
            WomError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
