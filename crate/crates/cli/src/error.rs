use serde_json::json;
use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// A config field failed validation; `field` is its dotted path.
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sassl::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { field: field.into(), message: message.into() }
    }

    /// Wraps a core config error with the section it came from. Core
    /// messages already start with the offending field name.
    pub fn in_section(section: &str, e: sassl::Error) -> Self {
        match e {
            sassl::Error::Config(m) | sassl::Error::InvalidInput(m) => match m.split_once(": ") {
                Some((field, rest)) if !field.contains(' ') => CliError::config(format!("{section}.{field}"), rest),
                _ => CliError::config(section, m),
            },
            other => CliError::Core(other),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "invalid_config",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut e = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Config { field, .. } = self {
            e["field"] = json!(field);
        }
        json!({ "error": e })
    }
}
