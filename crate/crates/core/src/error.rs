use thiserror::Error;

/// Errors raised by grid construction, energy evaluation and the experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Optimize(#[from] crate::optimizer::OptimizeError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        // Negated so NaN fails the check.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::error::invalid(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
