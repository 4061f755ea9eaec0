//! Command errors mapped onto process exit codes: 2 for I/O and malformed
//! files, 3 for semantically inconsistent content (shape, channel or class
//! mismatches), 4 for verification failures.

use std::fmt;

use histoseg_core::Error as CoreError;

#[derive(Debug)]
pub enum CmdError {
    /// Unreadable, unwritable, truncated or unparseable inputs.
    Io(String),
    /// Inputs parsed but are inconsistent with each other or out of range.
    Data(String),
    /// A verification run (gradient check) did not meet its tolerance.
    Verification(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Io(_) => 2,
            CmdError::Data(_) => 3,
            CmdError::Verification(_) => 4,
        }
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        CmdError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Io(msg) => write!(f, "{msg}"),
            CmdError::Data(msg) => write!(f, "{msg}"),
            CmdError::Verification(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<CoreError> for CmdError {
    fn from(err: CoreError) -> Self {
        CmdError::Data(err.to_string())
    }
}

pub type CmdResult<T> = Result<T, CmdError>;
