use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("numeric input error: {0}")]
    Numeric(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("state error: {0}")]
    State(String),
    #[error("not ready: {0}")]
    NotReady(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("layout error: {0}")]
    Layout(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("training divergence in stage {stage}: {detail}")]
    Training { stage: String, detail: String },
    #[error("empty high-confidence set: {0}")]
    EmptyHcs(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 divergence, 4 empty HCS, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Training { .. } => 3,
            Error::EmptyHcs(_) => 4,
            _ => 1,
        }
    }
}
