use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or invalid configuration; `key` is the dotted path of the
    /// offending entry.
    #[error("{path}: {key}{}: {message}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config {
        path: String,
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("{0}")]
    Input(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("monitor infeasible: {0}")]
    MonitorInfeasible(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input(_) | CliError::Io { .. } => 1,
            CliError::Certification(_) => 2,
            CliError::MonitorInfeasible(_) => 3,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
