use alloc::string::String;

/// Errors raised by the fitting pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Dimensions, indices or settings that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),
    /// A non-finite value appeared where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An argument outside the domain of a metric.
    #[error("domain error: {0}")]
    Domain(String),
    /// API misuse, e.g. a tape replayed against a network that changed.
    #[error("usage error: {0}")]
    Usage(String),
    /// Point clouds that cannot be aligned.
    #[error("alignment error: {0}")]
    Alignment(String),
    /// A training loss term became NaN or infinite.
    #[error("non-finite {term} at step {step} (batch seed {batch_seed:#018x})")]
    NonFiniteLoss {
        step: usize,
        term: &'static str,
        batch_seed: u64,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
pub(crate) use config_err;
