use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("malformed request body: {0}")]
    BadRequest(String),

    #[error("invalid model artifact: {0}")]
    InvalidArtifact(#[source] carbontag_core::Error),

    #[error("no model loaded")]
    NoModel,

    #[error("request exceeded the {0} ms processing budget")]
    Timeout(u64),

    #[error("failed to persist record: {0}")]
    Persistence(String),

    #[error("estimation failed: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Validation { .. } | ServiceError::BadRequest(_) | ServiceError::InvalidArtifact(_) => 400,
            ServiceError::NoModel => 503,
            ServiceError::Timeout(_) => 504,
            ServiceError::Persistence(_) | ServiceError::Internal(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Validation { .. } => "validation",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::InvalidArtifact(_) => "invalid_artifact",
            ServiceError::NoModel => "no_model",
            ServiceError::Timeout(_) => "timeout",
            ServiceError::Persistence(_) => "persistence",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            ServiceError::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}
