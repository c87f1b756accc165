use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(lensvlc_core::Error),
    #[error(transparent)]
    Neural(lensvlc_neural::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Divergence(_) => 3,
            _ => 1,
        }
    }
}

impl From<lensvlc_core::Error> for Error {
    fn from(e: lensvlc_core::Error) -> Self {
        match e {
            lensvlc_core::Error::Config { field, reason } => Error::Config(format!("{field}: {reason}")),
            other => Error::Core(other),
        }
    }
}

impl From<lensvlc_neural::Error> for Error {
    fn from(e: lensvlc_neural::Error) -> Self {
        match e {
            lensvlc_neural::Error::Divergence { epoch, loss } => {
                Error::Divergence(format!("training loss {loss} at epoch {epoch}"))
            }
            lensvlc_neural::Error::Spec(s) => Error::Config(format!("network: {s}")),
            lensvlc_neural::Error::Core(c) => c.into(),
            other => Error::Neural(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
