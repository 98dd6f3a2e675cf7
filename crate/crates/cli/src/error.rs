use std::fmt;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    External,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::External => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn external(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::External,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            ErrorKind::Config => "configuration error",
            ErrorKind::Data => "data error",
            ErrorKind::External => "external service error",
        };
        write!(f, "{label}: {}", self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

use leitsatz_core::corpus::CorpusError;
use leitsatz_core::http::HttpError;
use leitsatz_core::metrics::{EmbedError, MetricError};
use leitsatz_core::summarize::{GenerationError, SummarizeError};
use leitsatz_core::textproc::CountError;

impl From<CountError> for CliError {
    fn from(e: CountError) -> Self {
        CliError::external(e.to_string())
    }
}

impl From<HttpError> for CliError {
    fn from(e: HttpError) -> Self {
        CliError::external(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Count(c) => c.into(),
            CorpusError::InvalidRatios(_) | CorpusError::InvalidThreshold => CliError::config(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<SummarizeError> for CliError {
    fn from(e: SummarizeError) -> Self {
        match e {
            SummarizeError::Count(c) => c.into(),
            SummarizeError::InvalidDamping(_) | SummarizeError::InvalidBudget { .. } | SummarizeError::ZeroLength => {
                CliError::config(e.to_string())
            }
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        CliError::external(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Embed(EmbedError::Http(h)) => h.into(),
            MetricError::NoEmbeddingProvider => CliError::config(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Http(h) => h.into(),
            EmbedError::CountMismatch { .. } => CliError::external(e.to_string()),
            other => CliError::data(other.to_string()),
        }
    }
}
