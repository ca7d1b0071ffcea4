use alloc::string::String;

/// Errors raised by the core library.
///
/// The variants map onto the exit-code classes of the command line.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Input data is malformed (ragged channels, NaN samples, bad role tags).
    #[error("format error: {0}")]
    Format(String),
    /// A linear-algebra step failed (singular system, failed factorization).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// A configuration value is invalid.
    #[error("config error: {0}")]
    Config(String),
}

/// Shorthand result type.
pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! domain {
    ($($arg:tt)*) => { $crate::Error::Domain(alloc::format!($($arg)*)) };
}
macro_rules! format_err {
    ($($arg:tt)*) => { $crate::Error::Format(alloc::format!($($arg)*)) };
}
macro_rules! numerical {
    ($($arg:tt)*) => { $crate::Error::Numerical(alloc::format!($($arg)*)) };
}
macro_rules! config {
    ($($arg:tt)*) => { $crate::Error::Config(alloc::format!($($arg)*)) };
}
pub(crate) use {config, domain, format_err, numerical};
