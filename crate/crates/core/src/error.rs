use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports. The variants map onto the CLI exit
/// code classes: usage (2), resource (3) and numerical (4).
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("numerical failure: {msg} (achieved error estimate {achieved:e})")]
    Numerical { msg: String, achieved: f64 },

    #[error("no further kink detected: {0}")]
    Exhausted(String),

    #[error("ambiguous result: {0}")]
    Ambiguous(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exit code classes used by the command-line driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Resource,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_)
            | Error::Precondition(_)
            | Error::InvariantViolation(_)
            | Error::DegenerateInput(_)
            | Error::Parse { .. } => ErrorClass::Usage,
            Error::Resource(_) | Error::Io(_) => ErrorClass::Resource,
            Error::Numerical { .. } | Error::Exhausted(_) | Error::Ambiguous(_) => {
                ErrorClass::Numerical
            }
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Usage => 2,
            ErrorClass::Resource => 3,
            ErrorClass::Numerical => 4,
        }
    }
}
