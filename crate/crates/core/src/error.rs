use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid token {index} (codebook size {size})")]
    InvalidToken { index: usize, size: usize },

    #[error("tokenizer has not been trained")]
    NotTrained,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("sequence of length {len} exceeds context {context}")]
    ContextOverflow { len: usize, context: usize },

    /// Training produced a non-finite loss. The last finite checkpoint is
    /// carried so the caller can persist it.
    #[error("training diverged at epoch {epoch}")]
    Divergence {
        epoch: usize,
        last_good: Box<crate::checkpoint::Checkpoint>,
    },

    /// Text decoding hit its length limit before emitting the start-pose marker.
    #[error("reasoning overflow after {max_len} tokens: {partial:?}")]
    ReasoningOverflow { max_len: usize, partial: String },

    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },

    #[error("unknown {kind} `{name}`")]
    UnknownEntry { kind: &'static str, name: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
