use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record in an input file could not be parsed.
    #[error("{}line {line}: {message}", file_prefix(.path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing: {}", .0.join(", "))]
    MissingFields(Vec<String>),

    #[error("{stage} call {prompt_hash} failed: {message}")]
    Transport {
        stage: String,
        prompt_hash: String,
        message: String,
    },

    #[error("no fixture for {0}")]
    FixtureMiss(String),

    #[error("malformed backend data: {0}")]
    Backend(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("no nuggets generated for {0}")]
    NoNuggets(String),

    #[error("empty nugget pool")]
    EmptyPool,

    #[error("empty report for {0}")]
    EmptyReport(String),

    #[error("no gold nuggets")]
    NoGold,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn file_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    /// Wraps this error with a short description of what was being done.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
