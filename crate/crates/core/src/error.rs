use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("rate {rate} outside [0, 1] for {model}")]
    InvalidRate { model: &'static str, rate: f64 },

    #[error("site {site} out of range for {n_qubits} qubits")]
    SiteOutOfRange { site: usize, n_qubits: usize },

    #[error("{what}: {n_qubits} qubits exceeds the cap of {cap}")]
    CapExceeded {
        what: &'static str,
        n_qubits: usize,
        cap: usize,
    },

    #[error("gate is not unitary (deviation {0:.3e})")]
    NonUnitary(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by the request rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        !matches!(
            self,
            Error::Numerical(_) | Error::NonFinite(_) | Error::NonUnitary(_) | Error::DimensionMismatch(_)
        )
    }
}
