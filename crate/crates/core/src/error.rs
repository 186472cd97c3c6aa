use std::fmt;

use thiserror::Error;

/// A single failed check found while validating a model description.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Which field the problem was found in, e.g. `tau[0,1]` or `agents[1].channel`.
    pub field: String,
    /// Row index inside the field, when the check is row-wise.
    pub row: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "{} row {}: {}", self.field, row, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model ({} violation(s)): {}", .0.len(), join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("null belief passed to {0}")]
    NullBelief(&'static str),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid ground metric: {0}")]
    InvalidMetric(String),

    #[error("invalid memory window: {0}")]
    InvalidMemory(String),

    #[error("prescription space too large to enumerate ({0})")]
    SpaceTooLarge(String),

    #[error("empty codebook")]
    EmptyCodebook,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("exploration policy gives zero probability to action {0}")]
    ZeroExploration(usize),

    #[error("observed a measurement of zero probability under the model: {0}")]
    ImpossibleObservation(String),

    #[error("absolute continuity fails: {0}")]
    NotAbsolutelyContinuous(String),

    #[error("missing artifact {0}")]
    MissingArtifact(String),

    #[error("bound optimization infeasible: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
