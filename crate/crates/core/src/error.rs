use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A key or value encoding does not fit the u32 length prefix.
    #[error("encoded length {len} exceeds the u32 frame limit")]
    Oversize { len: usize },

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Caller broke a collective-call contract (bucket count, root rank...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("cluster startup failed, unreachable peers: {}", unreachable.join(", "))]
    Startup { unreachable: Vec<String> },

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// A user mapper or reducer failed; `at` names the element index or key.
    #[error("task failed at {at}: {message}")]
    Task { at: String, message: String },

    /// Another worker failed and the job was aborted collectively.
    #[error("job aborted, worker {rank} reported: {message}")]
    Aborted { rank: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Contract(_) | Error::Input(_))
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, Error::Transport(_) | Error::Startup { .. })
    }
}
