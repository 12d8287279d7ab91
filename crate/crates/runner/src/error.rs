use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("validation failure: {0}")]
    Validation(String),
    #[error("{experiment}: {source}")]
    Numerical {
        experiment: &'static str,
        #[source]
        source: bohmian_core::Error,
    },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunnerError {
    pub(crate) fn validation(field: &str, reason: impl std::fmt::Display) -> Self {
        RunnerError::Validation(format!("{field}: {reason}"))
    }
}

/// Tags a core error with the experiment it came from.
pub(crate) trait Context<T> {
    fn during(self, experiment: &'static str) -> Result<T, RunnerError>;
}

impl<T> Context<T> for bohmian_core::Result<T> {
    fn during(self, experiment: &'static str) -> Result<T, RunnerError> {
        self.map_err(|source| RunnerError::Numerical { experiment, source })
    }
}
