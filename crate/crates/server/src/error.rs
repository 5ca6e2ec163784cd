use serde::Serialize;
use warebus::etl::EtlError;
use warebus::olap::OlapError;
use warebus::store::StoreError;

/// Machine-readable error codes. The set is closed; clients may match on the
/// string form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    MethodNotAllowed,
    InvalidQuery,
    ValidationFailed,
    DuplicateBatch,
    ReadOnly,
    IoError,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 9] = [
        ErrorCode::BadRequest,
        ErrorCode::NotFound,
        ErrorCode::MethodNotAllowed,
        ErrorCode::InvalidQuery,
        ErrorCode::ValidationFailed,
        ErrorCode::DuplicateBatch,
        ErrorCode::ReadOnly,
        ErrorCode::IoError,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::NotFound => "not_found",
            ErrorCode::MethodNotAllowed => "method_not_allowed",
            ErrorCode::InvalidQuery => "invalid_query",
            ErrorCode::ValidationFailed => "validation_failed",
            ErrorCode::DuplicateBatch => "duplicate_batch",
            ErrorCode::ReadOnly => "read_only",
            ErrorCode::IoError => "io_error",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn status(self) -> u16 {
        match self {
            ErrorCode::BadRequest => 400,
            ErrorCode::NotFound => 404,
            ErrorCode::MethodNotAllowed => 405,
            ErrorCode::InvalidQuery => 400,
            ErrorCode::ValidationFailed => 422,
            ErrorCode::DuplicateBatch => 409,
            ErrorCode::ReadOnly => 403,
            ErrorCode::IoError => 500,
            ErrorCode::Internal => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{}: {message}", code.as_str())]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    /// Where in the request the problem is, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            location: None,
        }
    }

    pub fn at(mut self, location: impl Into<String>) -> Self {
        self.location = Some(location.into());
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    /// A JSON body that failed to parse, located by line and column.
    pub fn from_json(e: &serde_json::Error) -> Self {
        Self::bad_request(e.to_string()).at(format!("body line {}, column {}", e.line(), e.column()))
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::NoSchema
            | StoreError::UnknownFactTable(_)
            | StoreError::UnknownDimension(_)
            | StoreError::UnknownDocument(_)
            | StoreError::NotACatalog(_) => ErrorCode::NotFound,
            StoreError::ReadOnly => ErrorCode::ReadOnly,
            StoreError::DuplicateBatch(_) => ErrorCode::DuplicateBatch,
            StoreError::Integrity(_) | StoreError::SchemaConflict(_) => ErrorCode::ValidationFailed,
            StoreError::Io { .. } | StoreError::Locked => ErrorCode::IoError,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<OlapError> for ApiError {
    fn from(e: OlapError) -> Self {
        match e {
            OlapError::Store(s) => s.into(),
            OlapError::UnknownGroup(_) | OlapError::UnknownRow { .. } => ApiError::not_found(e.to_string()),
            OlapError::Export(_) => ApiError::new(ErrorCode::Internal, e.to_string()),
            other => ApiError::new(ErrorCode::InvalidQuery, other.to_string()),
        }
    }
}

impl From<EtlError> for ApiError {
    fn from(e: EtlError) -> Self {
        match e {
            EtlError::Store(s) => s.into(),
            EtlError::Io { .. } => ApiError::new(ErrorCode::IoError, e.to_string()),
            EtlError::DuplicateBatch { .. } => ApiError::new(ErrorCode::DuplicateBatch, e.to_string()),
            EtlError::Manifest { ref path, line, .. } => {
                let location = format!("{}:{line}", path.display());
                ApiError::new(ErrorCode::ValidationFailed, e.to_string()).at(location)
            }
            other => ApiError::new(ErrorCode::ValidationFailed, other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_serialize_as_their_string_form() {
        for code in ErrorCode::ALL {
            assert_eq!(serde_json::to_value(code).unwrap(), code.as_str());
        }
        let e = ApiError::bad_request("nope").at("body");
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"code":"bad_request","message":"nope","location":"body"}"#
        );
    }
}
