use thiserror::Error;

/// Errors raised while reading or validating input data files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: String },

    #[error("invalid record: {0}")]
    Invalid(String),

    #[error("unknown entity id `{0}`")]
    DanglingEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        DataError::Io {
            context: context.into(),
            source,
        }
    }

    /// Classifies a `serde_json` failure on line `line`, pulling the field
    /// name out of "missing field" messages.
    pub(crate) fn from_json(line: usize, err: serde_json::Error) -> Self {
        let message = err.to_string();
        if let Some(rest) = message.strip_prefix("missing field `") {
            if let Some(end) = rest.find('`') {
                return DataError::MissingField {
                    line,
                    field: rest[..end].to_string(),
                };
            }
        }
        DataError::Malformed { line, message }
    }
}

/// Errors from an inference backend.
#[derive(Debug, Clone, Error)]
pub enum BackendError {
    /// Connection-level failure; safe to retry.
    #[error("transport error: {0}")]
    Transport(String),

    /// The backend answered, but the payload violates the wire contract.
    #[error("protocol error: {message} (payload: {excerpt})")]
    Protocol { message: String, excerpt: String },

    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }

    pub(crate) fn protocol(message: impl Into<String>, payload: &str) -> Self {
        BackendError::Protocol {
            message: message.into(),
            excerpt: excerpt(payload, 200),
        }
    }
}

pub(crate) fn excerpt(payload: &str, max_chars: usize) -> String {
    let mut out: String = payload.chars().take(max_chars).collect();
    if payload.chars().count() > max_chars {
        out.push('…');
    }
    out
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("backend failure for subject {subject} ({pid}), sentence {sentence}: {source}")]
    Backend {
        subject: String,
        pid: String,
        sentence: usize,
        #[source]
        source: BackendError,
    },

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("{failed} of {total} work items failed, above the {tolerance_pct}% tolerance")]
    FailureToleranceExceeded {
        failed: usize,
        total: usize,
        tolerance_pct: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("validation set is empty; re-split the dataset with a larger validation fraction")]
    EmptyValidation,

    #[error("no rows to aggregate")]
    NoRows,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Data(#[from] DataError),
}
