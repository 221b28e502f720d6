use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An internal invariant was broken during a run.
    #[error("invariant violated at round {round}, agent {agent}, arm {arm}: {detail}")]
    Invariant {
        round: u64,
        agent: usize,
        arm: usize,
        detail: String,
    },

    #[error("graph error: {0}")]
    Graph(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invariant(round: u64, agent: usize, arm: usize, detail: impl Into<String>) -> Self {
        Error::Invariant {
            round,
            agent,
            arm,
            detail: detail.into(),
        }
    }
}
