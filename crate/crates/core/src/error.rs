use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite gradient in segment `{segment}`")]
    NonFiniteGradient { segment: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown environment `{0}` (expected one of grid, chainkey, minishop)")]
    UnknownEnv(String),
    #[error("episode already finished")]
    EpisodeDone,
    #[error("illegal action {action} in current state")]
    IllegalAction { action: usize },
    #[error("non-episodic MDP cannot be solved with gamma = 1")]
    NonEpisodic,
    #[error("singular linear system while computing occupancy")]
    Singular,
    #[error("expert failed on episode {episode}: final reward {reward}")]
    ExpertFailure { episode: u64, reward: f64 },
    #[error("malformed history: {0}")]
    MalformedHistory(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("checkpoint field `{field}`: {message}")]
    Checkpoint { field: String, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
