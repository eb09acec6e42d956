// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use quebian_core::node::NodeError;
use quebian_core::txflow::{EndorseError, RejectKind};
use quebian_core::consensus::SubmitError;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    AuthFailed,
    ConsentMissing,
    NotFound,
    Conflict,
    BadRequest,
    /// The transaction was accepted but did not commit in time.
    Timeout,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::AuthFailed | ErrorCode::ConsentMissing => StatusCode::FORBIDDEN,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::Timeout => StatusCode::GATEWAY_TIMEOUT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// The body of every non-2xx response.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_id: Option<String>,
    /// Overrides the status implied by `code`; never serialized.
    #[serde(skip)]
    pub status: Option<StatusCode>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), tx_id: None, status: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    pub fn with_tx(mut self, tx_id: impl Into<String>) -> Self {
        self.tx_id = Some(tx_id.into());
        self
    }

    pub fn with_status(mut self, status: StatusCode) -> Self {
        self.status = Some(status);
        self
    }

    pub fn status(&self) -> StatusCode {
        self.status.unwrap_or(self.code.status())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ApiError serializes")
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = serde_json::to_value(self.code).expect("code serializes");
        write!(f, "{}: {}", code.as_str().unwrap_or("?"), self.message)?;
        if let Some(tx) = &self.tx_id {
            write!(f, " (tx {tx})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

impl From<RejectKind> for ErrorCode {
    fn from(kind: RejectKind) -> Self {
        match kind {
            RejectKind::Auth => ErrorCode::AuthFailed,
            RejectKind::Consent => ErrorCode::ConsentMissing,
            RejectKind::NotFound => ErrorCode::NotFound,
            RejectKind::Conflict => ErrorCode::Conflict,
            RejectKind::BadRequest => ErrorCode::BadRequest,
        }
    }
}

impl From<NodeError> for ApiError {
    fn from(e: NodeError) -> Self {
        let message = e.to_string();
        match e {
            NodeError::Endorse(EndorseError::Chaincode(c)) => ApiError::new(c.kind.into(), c.message),
            NodeError::Endorse(EndorseError::BadSignature(_)) => ApiError::new(ErrorCode::AuthFailed, message),
            NodeError::Endorse(EndorseError::BadFunction(_) | EndorseError::TransientMismatch) => {
                ApiError::bad_request(message)
            }
            NodeError::Submit(SubmitError::Duplicate(_)) => ApiError::new(ErrorCode::Conflict, message),
            NodeError::Submit(SubmitError::Malformed(_)) => ApiError::bad_request(message),
            NodeError::NotCommitted(tx) => ApiError::internal(message).with_tx(tx),
            _ => ApiError::internal(message),
        }
    }
}
