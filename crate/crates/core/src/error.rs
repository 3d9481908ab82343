use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its valid domain.
    #[error("configuration error: {0}")]
    Config(String),

    /// A dotted override or scenario key does not name a known field.
    #[error("unknown configuration key `{key}`; valid keys: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },

    /// Scenario or override value has the wrong type.
    #[error("type mismatch for `{key}`: {message}")]
    TypeMismatch { key: String, message: String },

    /// Internal bookkeeping went out of sync; the run must stop.
    #[error("internal consistency error: {0}")]
    Consistency(String),

    /// A meta-review was requested for a manuscript without reviews.
    #[error("meta-review error: manuscript {0} has no reviews")]
    NoReviews(u64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("yaml error: {0}")]
    Yaml(#[from] serde_yaml::Error),
}

impl Error {
    /// Configuration problems (exit code 2) vs. runtime failures (exit code 3).
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::UnknownKey { .. } | Error::TypeMismatch { .. } | Error::Yaml(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
