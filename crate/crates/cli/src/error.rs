use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use coopsim_core::selection::SelectionError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    ConfigParse { path: PathBuf, line: Option<usize>, message: String },
    #[error("{}: invalid {block}: {message}", path.display())]
    Validation { path: PathBuf, block: String, message: String },
    /// Reading the config or a file it references.
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("writing {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Runtime(#[from] coopsim_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ConfigParse { .. } | CliError::Validation { .. } | CliError::Io { .. } => 2,
            CliError::Write { .. } | CliError::Runtime(_) => 3,
        }
    }

    pub fn parse(path: &Path, line: Option<usize>, message: impl Into<String>) -> Self {
        CliError::ConfigParse { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn validation(path: &Path, block: impl Into<String>, message: impl ToString) -> Self {
        CliError::Validation { path: path.to_path_buf(), block: block.into(), message: message.to_string() }
    }

    /// Map a selection error onto the parameter block it names.
    pub fn selection(path: &Path, e: SelectionError) -> Self {
        match e {
            SelectionError::InvalidParams { block, message } => CliError::validation(path, block, message),
            other => CliError::validation(path, "policies", other),
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn write(path: &Path, source: io::Error) -> Self {
        CliError::Write { path: path.to_path_buf(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// 1-based line of byte offset `at` in `text`.
pub fn line_of(text: &str, at: usize) -> usize {
    text[..at.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}
