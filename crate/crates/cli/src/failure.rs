use std::fmt::Display;

pub const VALIDATION: u8 = 1;
pub const USAGE: u8 = 2;
pub const IO: u8 = 3;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Display) -> Self {
        Self {
            code: USAGE,
            message: message.to_string(),
        }
    }

    pub fn validation(message: impl Display) -> Self {
        Self {
            code: VALIDATION,
            message: message.to_string(),
        }
    }
}

impl From<rbbm::Error> for Failure {
    fn from(e: rbbm::Error) -> Self {
        let code = match &e {
            rbbm::Error::Io(_) => IO,
            rbbm::Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => IO,
            _ => USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: IO,
            message: e.to_string(),
        }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Writes `contents` to `path`, mapping failures to the I/O exit code.
pub fn write(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Outcome {
    std::fs::write(path, contents).map_err(|e| Failure {
        code: IO,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

/// Reads `path` to a string, mapping failures to the I/O exit code.
pub fn read(path: &std::path::Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: IO,
        message: format!("cannot read {}: {e}", path.display()),
    })
}
