use alloc::string::String;

/// Error type shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A non-finite value appeared; `op` names the operation or step that produced it.
    #[error("numeric error in {op}: {detail}")]
    Numeric { op: String, detail: String },
    /// `pos` is a byte offset into the parsed text.
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            op: op.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn parse(pos: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            pos,
            msg: msg.into(),
        }
    }

    /// Stable short code, used by front ends to map errors onto exit codes or exceptions.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Numeric { .. } => "numeric-error",
            Error::Parse { .. } => "parse-error",
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
