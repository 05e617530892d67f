use crate::transport::Rank;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cluster configuration error: {0}")]
    ClusterConfig(String),

    #[error("deadlock: ranks {stuck:?} are blocked with no matching operation ({detail})")]
    Deadlock { stuck: Vec<Rank>, detail: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("rank {rank} exceeded the memory cap: {needed} bytes live, cap {cap}")]
    MemoryCap { rank: Rank, needed: u64, cap: u64 },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable label, used by the CLI's error JSON and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidTopology(_) => "invalid_topology",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ClusterConfig(_) => "cluster_config",
            Error::Deadlock { .. } => "deadlock",
            Error::Protocol(_) => "protocol",
            Error::Schema(_) => "schema",
            Error::Plan(_) => "plan",
            Error::Unsupported(_) => "unsupported",
            Error::MemoryCap { .. } => "memory_cap",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }

    /// Errors that are a consequence of another worker failing rather than a cause.
    pub(crate) fn is_secondary(&self) -> bool {
        matches!(self, Error::Deadlock { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(format!("json: {e}"))
    }
}
