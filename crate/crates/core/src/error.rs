use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("operation not supported for {kind} profiles: {op}")]
    Unsupported { kind: &'static str, op: &'static str },

    #[error("resolvent pole at v = {0}")]
    Pole(String),

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("insufficient bandwidth: {0}")]
    Bandwidth(String),

    #[error("time window too short: {0}")]
    Window(String),

    #[error("no convergence after {iterations} iterations (last change {last_change:.3e})")]
    Convergence { iterations: usize, last_change: f64 },

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::InvalidConfig(_) | Error::Unsupported { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
