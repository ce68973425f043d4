use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Io,
    Data,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("missing required column `{0}`")]
    MissingRequiredColumn(String),

    #[error("duplicate node id `{0}`")]
    DuplicateId(String),

    #[error("self-citation on node `{0}` (row {1})")]
    SelfCitation(String, usize),

    #[error("edge {citing} -> {cited} references unknown node `{missing}`")]
    DanglingEndpoint {
        citing: String,
        cited: String,
        missing: String,
    },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("focal set is empty")]
    EmptyFocalSet,

    #[error("invalid year range {from}..={to}")]
    InvalidYearRange { from: i32, to: i32 },

    #[error("weight for citer `{citer}` is not positive ({weight})")]
    NonPositiveWeight { citer: String, weight: f64 },

    #[error("no weight given for citer `{0}`")]
    MissingWeight(String),

    #[error("selection resolved to no focal nodes")]
    EmptySelection,

    #[error("worker count must be at least 1")]
    ZeroWorkers,

    #[error("failed to write result: {0}")]
    SinkWriteFailure(String),

    #[error("{what} = {value} is below the binning support")]
    BelowSupport { what: &'static str, value: i64 },

    #[error("{what} must be non-negative, got {value}")]
    NegativeInput { what: &'static str, value: i64 },

    #[error("no results satisfy the treatment criteria")]
    EmptyResultSet,

    #[error("pair {focal} -> {prior_art} appears in both treated and control pools")]
    OverlappingPools { focal: String, prior_art: String },

    #[error("panel window is empty ({0}..={1})")]
    WindowEmpty(i32, i32),

    #[error("panel has no {0} rows in the estimation windows")]
    MissingGroup(&'static str),

    #[error("pre window {pre:?} and post window {post:?} overlap")]
    OverlappingWindows { pre: (i32, i32), post: (i32, i32) },

    #[error("need at least 2 clusters per group, got {treated} treated and {control} control")]
    TooFewClusters { treated: usize, control: usize },

    #[error("bootstrap needs at least 100 replications, got {0}")]
    TooFewReplications(usize),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) | Error::SinkWriteFailure(_) => ErrorClass::Io,
            Error::InvalidArgument(_) | Error::ZeroWorkers | Error::TooFewReplications(_) => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn malformed(row: usize, reason: impl Into<String>) -> Self {
        Error::MalformedRow {
            row,
            reason: reason.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let row = err
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            kind => Error::malformed(row, format!("{kind:?}")),
        }
    }
}
