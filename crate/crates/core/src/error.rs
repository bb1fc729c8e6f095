use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },

    #[error("optimizer error: {0}")]
    Optimizer(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
        /// Mean losses of the epochs completed before the failure.
        history: Vec<f64>,
    },

    #[error("ensemble training failed for members {members:?}: {message}")]
    Ensemble {
        members: Vec<usize>,
        message: String,
        /// Per-member epoch losses, partial for the failed members.
        histories: Vec<Vec<f64>>,
    },

    #[error(
        "oracle budget exceeded: {evaluations} evaluations > {limit}; \
         use coordinate_descent_refine or fewer segments/levels"
    )]
    Budget { evaluations: u128, limit: u128 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
