//! Bearer-token authentication for the two kinds of callers.

use axum::async_trait;
use axum::extract::FromRequestParts;
use axum::http::request::Parts;
use axum::http::{header, HeaderMap};
use emomap_core::model::Session;
use emomap_core::Platform;

use crate::error::{ApiError, ApiResult};
use crate::AppState;

pub fn bearer(headers: &HeaderMap) -> Option<&str> {
    let value = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme
        .eq_ignore_ascii_case("bearer")
        .then(|| token.trim())
        .filter(|t| !t.is_empty())
}

#[derive(Debug, Clone)]
pub enum Principal {
    Researcher(String),
    Participant(Session),
}

pub fn identify(platform: &Platform, headers: &HeaderMap) -> ApiResult<Principal> {
    let token = bearer(headers).ok_or_else(ApiError::unauthorized)?;
    if let Ok(username) = platform.authenticate_researcher(token) {
        return Ok(Principal::Researcher(username));
    }
    match platform.session(token) {
        Ok(session) => Ok(Principal::Participant(session)),
        Err(e) => Err(e.into()),
    }
}

#[async_trait]
impl FromRequestParts<AppState> for Principal {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> ApiResult<Self> {
        identify(&state.platform, &parts.headers)
    }
}

/// A researcher. Researchers are granted every experiment.
#[derive(Debug, Clone)]
pub struct Researcher(pub String);

#[async_trait]
impl FromRequestParts<AppState> for Researcher {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> ApiResult<Self> {
        match identify(&state.platform, &parts.headers)? {
            Principal::Researcher(name) => Ok(Researcher(name)),
            Principal::Participant(_) => Err(ApiError::forbidden("researcher access required")),
        }
    }
}

/// A participant with a live session, bound to that session's experiment.
#[derive(Debug, Clone)]
pub struct ParticipantSession(pub Session);

#[async_trait]
impl FromRequestParts<AppState> for ParticipantSession {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> ApiResult<Self> {
        match identify(&state.platform, &parts.headers)? {
            Principal::Participant(s) => Ok(ParticipantSession(s)),
            Principal::Researcher(_) => Err(ApiError::forbidden("participant session required")),
        }
    }
}
