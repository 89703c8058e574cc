use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {what} at row {row}{}", col.map(|c| format!(", column {c}")).unwrap_or_default())]
    NonFinite {
        what: &'static str,
        row: usize,
        col: Option<usize>,
    },

    #[error("rank-deficient design: numerical rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::Degenerate(_) | Error::Numerical(_)
        )
    }
}
