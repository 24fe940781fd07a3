use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite loss while probing parameter {param}")]
    NonFiniteLoss { param: String },

    #[error("concept `{concept}`: {reason}")]
    Annotation { concept: String, reason: String },

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("{} invalid record(s) in {}: {}", .problems.len(), .path.display(), join_problems(.problems))]
    Dataset {
        path: PathBuf,
        problems: Vec<RecordProblem>,
    },

    #[error("schema hash mismatch: checkpoint has {found}, this build expects {expected}")]
    SchemaMismatch { expected: String, found: String },

    #[error("llm transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One rejected line of a JSON Lines file (1-based line number).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordProblem {
    pub line: usize,
    pub reason: String,
}

fn join_problems(problems: &[RecordProblem]) -> String {
    problems
        .iter()
        .map(|p| format!("line {}: {}", p.line, p.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
