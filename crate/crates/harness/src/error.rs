use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parse error at line {line}, column {column} (field {field}): {message}")]
    Parse { line: usize, column: usize, field: String, message: String },
    #[error("invalid field {field}: {message}")]
    Field { field: String, message: String },
    #[error("cannot access {path}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] bichore_core::Error),
    #[error("trace replay failed: {0}")]
    Replay(String),
}

impl HarnessError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Field { field: field.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
