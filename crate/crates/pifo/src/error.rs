//! Error types for the command-line tool and its file formats.

use std::path::PathBuf;

use pifo_core::CoreError;

/// Why a binary artifact (checkpoint or demo file) failed to parse.
///
/// The variants are deliberately distinct so callers can tell a file of the
/// wrong kind (`BadMagic`) from a newer format revision
/// (`UnsupportedVersion`) from a file cut short (`Truncated`).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic bytes (expected {expected:?})")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("truncated file: needed {wanted} more byte(s) at offset {offset}")]
    Truncated { offset: usize, wanted: usize },
    #[error("{0}")]
    Malformed(String),
}

/// Top-level error for every subcommand.
///
/// `Usage` is reserved for bad invocations (missing or invalid flag values,
/// unreadable inputs) and maps to exit code 2; everything else exits 1.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("{0}")]
    Run(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Adapter for `map_err` on filesystem calls: attaches the path.
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Io { path, source }
    }

    /// Adapter for `map_err` on parse results: attaches the path.
    pub fn format(path: impl Into<PathBuf>) -> impl FnOnce(FormatError) -> AppError {
        let path = path.into();
        move |source| AppError::Format { path, source }
    }
}

pub type Result<T> = std::result::Result<T, AppError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_exits_2_everything_else_1() {
        assert_eq!(AppError::Usage("x".into()).exit_code(), 2);
        assert_eq!(AppError::Run("x".into()).exit_code(), 1);
        assert_eq!(
            AppError::Format {
                path: "a.pifo".into(),
                source: FormatError::BadMagic { expected: "PIFO" },
            }
            .exit_code(),
            1
        );
    }

    #[test]
    fn messages_are_single_lines() {
        let errs: Vec<AppError> = vec![
            AppError::Usage("--env: unknown environment".into()),
            AppError::Io {
                path: "runs/a".into(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "gone"),
            },
            AppError::Format {
                path: "d.demo".into(),
                source: FormatError::Truncated { offset: 12, wanted: 4 },
            },
        ];
        for e in errs {
            let msg = e.to_string();
            assert!(!msg.contains('\n'), "multi-line: {msg}");
            assert!(!msg.is_empty());
        }
    }
}
