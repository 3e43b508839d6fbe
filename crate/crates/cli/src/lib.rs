//! Command implementations behind the `treecrf` binary.

pub mod bench;
pub mod commands;
pub mod config;
pub mod selfcheck;

use std::fmt;

/// Exit status 1: a check or validation failed.
pub const EXIT_FAILED: u8 = 1;
/// Exit status 2: bad usage, unreadable input or a malformed file.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }

    pub fn failed(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_FAILED,
            error: error.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// I/O and file-format problems are usage errors; anything the data or the
/// model gets wrong is a failure.
impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        use treecrf::Error as E;
        let usage = error.chain().any(|c| {
            c.is::<std::io::Error>()
                || matches!(
                    c.downcast_ref::<E>(),
                    Some(E::Io(_) | E::Parse { .. } | E::Config(_) | E::ModelFormat(_) | E::Json(_))
                )
        });
        Failure {
            code: if usage { EXIT_USAGE } else { EXIT_FAILED },
            error,
        }
    }
}

impl From<treecrf::Error> for Failure {
    fn from(e: treecrf::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

pub type CmdResult = Result<(), Failure>;
