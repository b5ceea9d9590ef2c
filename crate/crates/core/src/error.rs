use thiserror::Error;

use crate::warehouse::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {b} is unreachable from node {a}")]
    Unreachable { a: NodeId, b: NodeId },

    #[error("unknown node id {0}")]
    UnknownNode(u32),

    #[error("spatial index is empty")]
    EmptyIndex,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("episode is still running")]
    EpisodeRunning,

    #[error("episode already finished")]
    EpisodeOver,

    #[error("all actions are masked")]
    AllMasked,

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("path cache does not match this layout")]
    LayoutMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::Config(_) | Error::LayoutMismatch
        )
    }
}
