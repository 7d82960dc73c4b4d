use std::fmt;

/// Exit-code category of a failure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Config,
    Protocol,
    Io,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Protocol => 3,
            Category::Io => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { category: Category::Config, message: message.into() }
    }

    pub fn protocol(message: impl Into<String>) -> Self {
        Self { category: Category::Protocol, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { category: Category::Io, message: message.into() }
    }

    pub fn with_prefix(self, prefix: &str) -> Self {
        Self { message: format!("{prefix}: {}", self.message), ..self }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

/// Tags a library error with the setting it came from.
pub fn protocol_err(setting: &str, err: weakdirect::Error) -> CliError {
    CliError::protocol(format!("{setting}: {err}"))
}

pub fn io_err(path: &std::path::Path, err: impl fmt::Display) -> CliError {
    CliError::io(format!("{}: {err}", path.display()))
}
