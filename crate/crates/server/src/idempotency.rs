//! Replay of mutating requests that carry an `Idempotency-Key` header.
//!
//! The first response for a (caller, method, path, key) scope is remembered
//! and returned verbatim for every retry. Concurrent retries wait for the
//! first attempt to finish. Server errors are not remembered so the client
//! can try again.

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use axum::body::{Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use emomap_core::storage::sha256_hex;

use crate::error::ApiError;
use crate::AppState;

pub const HEADER: &str = "idempotency-key";

const MAX_KEY_LEN: usize = 255;

#[derive(Clone)]
struct Stored {
    fingerprint: String,
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

type Slot = Arc<tokio::sync::Mutex<Option<Stored>>>;

pub struct IdempotencyCache {
    capacity: usize,
    inner: Mutex<(HashMap<String, Slot>, VecDeque<String>)>,
}

impl IdempotencyCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            inner: Mutex::new((HashMap::new(), VecDeque::new())),
        }
    }

    fn slot(&self, scope: &str) -> Slot {
        let mut guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let (slots, order) = &mut *guard;
        if let Some(s) = slots.get(scope) {
            return s.clone();
        }
        while slots.len() >= self.capacity {
            match order.pop_front() {
                Some(old) => {
                    slots.remove(&old);
                }
                None => break,
            }
        }
        let slot = Slot::default();
        slots.insert(scope.to_string(), slot.clone());
        order.push_back(scope.to_string());
        slot
    }
}

fn replay(stored: &Stored) -> Response {
    let mut res = (stored.status, stored.body.clone()).into_response();
    if let Some(ct) = &stored.content_type {
        res.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
    }
    res.headers_mut()
        .insert("idempotent-replay", HeaderValue::from_static("true"));
    res
}

pub async fn middleware(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if !matches!(*req.method(), Method::POST | Method::PATCH | Method::PUT | Method::DELETE) {
        return next.run(req).await;
    }
    let Some(key) = req.headers().get(HEADER).map(|v| v.as_bytes().to_vec()) else {
        return next.run(req).await;
    };
    if key.is_empty() || key.len() > MAX_KEY_LEN {
        return ApiError::invalid("idempotency key must be 1 to 255 bytes").into_response();
    }
    let auth = req
        .headers()
        .get(header::AUTHORIZATION)
        .map(|v| v.as_bytes().to_vec())
        .unwrap_or_default();
    let target = format!("{} {}", req.method(), req.uri().path());
    let scope = sha256_hex(&[&auth[..], b"\n", target.as_bytes(), b"\n", &key[..]].concat());

    let (parts, body) = req.into_parts();
    let body = match axum::body::to_bytes(body, state.body_limit).await {
        Ok(b) => b,
        Err(_) => {
            return ApiError::from(emomap_core::Error::ImageTooLarge {
                limit: state.platform.config().max_image_bytes,
            })
            .into_response()
        }
    };
    let fingerprint = sha256_hex(&[target.as_bytes(), b"\n", &body[..]].concat());

    let slot = state.idempotency.slot(&scope);
    let mut stored = slot.lock().await;
    if let Some(s) = stored.as_ref() {
        if s.fingerprint != fingerprint {
            return ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "idempotency_key_reused",
                "idempotency key was already used for a different request",
            )
            .into_response();
        }
        return replay(s);
    }

    let res = next.run(Request::from_parts(parts, Body::from(body))).await;
    if res.status().is_server_error() {
        return res;
    }
    let (parts, body) = res.into_parts();
    let bytes = match axum::body::to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e.to_string()).into_response(),
    };
    *stored = Some(Stored {
        fingerprint,
        status: parts.status,
        content_type: parts.headers.get(header::CONTENT_TYPE).cloned(),
        body: bytes.clone(),
    });
    Response::from_parts(parts, Body::from(bytes))
}
