use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Contract,
    Lock,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate document id '{0}'")]
    DuplicateId(String),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("vocabulary is empty after pruning; loosen min_df/max_df or the stopword list")]
    EmptyVocabulary,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("stratum '{stratum}' has {size} document(s); every stratum needs at least 2")]
    SmallStratum { stratum: String, size: usize },
    #[error("test set already used")]
    LockConsumed,
    #[error("test set modified: digest {found} does not match locked digest {expected}")]
    TestSetModified { expected: String, found: String },
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("common support violated: {0}")]
    CommonSupport(String),
    #[error("unobserved cell {0}")]
    MissingCell(String),
    #[error("non-finite evidence bound at iteration {iteration}")]
    NonFiniteBound { iteration: usize },
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("only {found} separable anchor words for {requested} topics; try a smaller K")]
    TooFewAnchors { requested: usize, found: usize },
    #[error("column misalignment: expected {expected} columns, got {found}")]
    Misaligned { expected: usize, found: usize },
    #[error("the covariate prior cannot include the treatment '{0}': the same text would map to different values")]
    TreatmentInPrior(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::LockConsumed | Error::TestSetModified { .. } => ErrorClass::Lock,
            Error::NonFiniteBound { .. }
            | Error::RankDeficient(_)
            | Error::NotPositiveDefinite(_)
            | Error::TooFewAnchors { .. } => ErrorClass::Numerical,
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Contract,
        }
    }
}
