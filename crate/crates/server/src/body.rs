//! Request body decoding with JSON error bodies instead of axum's plain-text
//! rejections.

use axum::body::Bytes;
use axum::extract::multipart::{Field, MultipartError, MultipartRejection};
use axum::extract::Multipart;
use axum::http::StatusCode;
use serde::de::DeserializeOwned;

use crate::error::{ApiError, ApiResult};
use crate::AppState;

pub fn json<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        if e.is_syntax() || e.is_eof() {
            ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string())
        } else {
            ApiError::invalid(e.to_string())
        }
    })
}

pub fn multipart(m: Result<Multipart, MultipartRejection>) -> ApiResult<Multipart> {
    m.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.body_text()))
}

fn field_error(state: &AppState, e: MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        emomap_core::Error::ImageTooLarge {
            limit: state.platform.config().max_image_bytes,
        }
        .into()
    } else {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.body_text())
    }
}

/// A multipart form read into memory: (field name, bytes) in order.
pub async fn read_form(state: &AppState, mut form: Multipart) -> ApiResult<Vec<(String, Bytes)>> {
    let mut fields = Vec::new();
    while let Some(field) = form.next_field().await.map_err(|e| field_error(state, e))? {
        let name = field.name().unwrap_or_default().to_string();
        fields.push((name, read_field(state, field).await?));
    }
    Ok(fields)
}

async fn read_field(state: &AppState, field: Field<'_>) -> ApiResult<Bytes> {
    field.bytes().await.map_err(|e| field_error(state, e))
}

pub fn text(value: &Bytes, name: &str) -> ApiResult<String> {
    String::from_utf8(value.to_vec()).map_err(|_| ApiError::invalid(format!("field '{name}' is not UTF-8")))
}
