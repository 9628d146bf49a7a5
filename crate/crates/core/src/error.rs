use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Candle(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample {index}: no valid configuration found within {retries} retries")]
    Generation { index: usize, retries: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(
        "enumeration budget exceeded: C({n}, {k}) = {count} candidate subsets > {budget}; use the greedy solver"
    )]
    BudgetExceeded {
        n: usize,
        k: usize,
        count: u128,
        budget: u128,
    },

    #[error("node {0} has no incident hyperedge")]
    IsolatedNode(usize),

    #[error("non-finite embedding at scale {scale}, iteration {iteration}")]
    NonFiniteMessage { scale: usize, iteration: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("missing {0}")]
    Missing(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
