use thiserror::Error;

/// Errors surfaced by the pipeline crate.
///
/// Numeric-core failures are wrapped rather than flattened so callers can
/// still match on the underlying [`dagan_nn::NnError`] variant.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] dagan_nn::NnError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// Malformed or inconsistent dataset content (bad container header,
    /// class-count mismatch, empty class, ...).
    #[error("data: {0}")]
    Data(String),

    /// Invalid user-supplied configuration.
    #[error("config: {0}")]
    Config(String),

    /// Training-time failure (non-finite loss, checkpoint mismatch, ...).
    #[error("train: {0}")]
    Train(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Shorthand for the common `Error::Data(format!(...))` pattern.
macro_rules! data_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Data(format!($($arg)*))
    };
}

macro_rules! config_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Config(format!($($arg)*))
    };
}

macro_rules! train_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Train(format!($($arg)*))
    };
}

pub(crate) use {config_err, data_err, train_err};
