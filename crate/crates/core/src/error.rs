use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    /// A file was readable but its contents are not a valid encoding.
    #[error("malformed input: {0}")]
    Format(String),
    /// Two objects that should share a grid or a shape do not.
    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub fn pre(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        // negated on purpose: NaN must fail the check
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::Error::Precondition(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
