use std::path::PathBuf;

/// Errors produced by the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The source header or schema configuration is unusable.
    #[error("schema error: {0}")]
    Schema(String),
    /// A data row could not be parsed.
    #[error("row {row}: {message}")]
    Row {
        /// 1-based data row number (the header is row 0).
        row: usize,
        /// What went wrong.
        message: String,
    },
    /// An argument violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Requested more components than the data supports.
    #[error("requested {requested} components but the attainable rank is {rank}")]
    RankDeficient {
        /// Number of components asked for.
        requested: usize,
        /// Rank of the centered data.
        rank: usize,
    },
    /// Stratified folding is impossible because a class is too small.
    #[error("class {class} has {count} samples, fewer than {folds} folds")]
    ClassTooSmall {
        /// Class name or index.
        class: String,
        /// Samples of that class.
        count: usize,
        /// Requested number of folds.
        folds: usize,
    },
    /// An imported embedding does not line up with the dataset.
    #[error("embedding row {row}: {message}")]
    EmbeddingMismatch {
        /// 1-based data row in the embedding file.
        row: usize,
        /// What went wrong.
        message: String,
    },
    /// Every candidate in a hyperparameter search failed.
    #[error("all {} search candidates failed: {}", .0.len(), .0.join("; "))]
    SearchFailed(Vec<String>),
    /// A file could not be opened or written.
    #[error("{path}: {source}")]
    File {
        /// Offending path.
        path: PathBuf,
        /// Underlying I/O failure.
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
