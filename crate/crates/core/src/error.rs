use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("state bound {requested} exceeds the limit of {limit}")]
    TableTooLarge { requested: usize, limit: usize },

    #[error("no successful replicates to summarize")]
    EmptyReport,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::IndexOutOfRange(_)
            | Error::TableTooLarge { .. }
            | Error::Config(_)
            | Error::Json(_) => 2,
            Error::Io(_) | Error::Parse(_) | Error::Csv(_) => 3,
            Error::DegenerateSeries(_) | Error::EmptyReport => 4,
        }
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
