use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FpaError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {}", .0.join("; "))]
    Precondition(Vec<String>),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, FpaError>;

