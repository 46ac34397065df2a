//! Participant-facing endpoints. Every handler works only within the
//! experiment bound to the caller's session.

use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use emomap_core::model::{GeoPoint, PictureSource};
use emomap_core::platform::{LoginRequest, NextPicture, TagSubmission};
use emomap_core::{Error, Placement};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::{ApiError, ApiResult};
use crate::locale::negotiate;
use crate::principal::{ParticipantSession, Principal};
use crate::{blocking, body, AppState};

pub async fn open_session(State(state): State<AppState>, raw: Bytes) -> ApiResult<Response> {
    let request: LoginRequest = body::json(&raw)?;
    let session = blocking(&state, move |p| p.open_session(request)).await?;
    Ok(Json(session).into_response())
}

pub async fn close_session(
    State(state): State<AppState>,
    ParticipantSession(session): ParticipantSession,
) -> StatusCode {
    state.platform.close_session(&session.token);
    StatusCode::NO_CONTENT
}

/// Locale chosen for this request, `None` for the default labels.
fn request_locale(
    state: &AppState,
    experiment_id: &str,
    query: &HashMap<String, String>,
    headers: &HeaderMap,
) -> ApiResult<(emomap_core::TagMap, Option<String>)> {
    let experiment = state.platform.experiment(experiment_id)?;
    let map = state.platform.tag_map(&experiment.tag_map_id)?;
    let accept = headers
        .get(header::ACCEPT_LANGUAGE)
        .and_then(|v| v.to_str().ok());
    let locale = negotiate(
        &map,
        query.get("locale").map(String::as_str),
        accept,
        &experiment.locale_default,
    );
    Ok((map, locale))
}

pub async fn next(
    State(state): State<AppState>,
    ParticipantSession(session): ParticipantSession,
    Query(query): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> ApiResult<Json<Value>> {
    match state.platform.next_picture(&session.token)? {
        NextPicture::Done { .. } => Ok(Json(json!({ "done": true }))),
        NextPicture::Picture {
            picture_id,
            position,
            total,
        } => {
            let (map, locale) = request_locale(&state, &session.experiment_id, &query, &headers)?;
            Ok(Json(json!({
                "picture_url": format!("/api/pictures/{picture_id}"),
                "picture_id": picture_id,
                "position": position,
                "total": total,
                "locale": locale,
                "labels": map.labels(locale.as_deref()),
                "tag_map": map,
            })))
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagBody {
    picture_id: String,
    x: f64,
    y: f64,
    #[serde(default)]
    lat: Option<f64>,
    #[serde(default)]
    lon: Option<f64>,
    #[serde(default)]
    client_time: Option<String>,
}

fn location(lat: Option<f64>, lon: Option<f64>) -> ApiResult<Option<GeoPoint>> {
    match (lat, lon) {
        (Some(lat), Some(lon)) => Ok(Some(GeoPoint { lat, lon })),
        (None, None) => Ok(None),
        _ => Err(Error::MissingLocation.into()),
    }
}

pub async fn submit_tag(
    State(state): State<AppState>,
    ParticipantSession(session): ParticipantSession,
    Query(query): Query<HashMap<String, String>>,
    headers: HeaderMap,
    raw: Bytes,
) -> ApiResult<Response> {
    let tag: TagBody = body::json(&raw)?;
    let submission = TagSubmission {
        picture_id: tag.picture_id,
        placement: Placement::new(tag.x, tag.y),
        location: location(tag.lat, tag.lon)?,
        client_time: tag.client_time,
    };
    let token = session.token.clone();
    let event = blocking(&state, move |p| p.submit_tag(&token, submission)).await?;

    let (map, locale) = request_locale(&state, &session.experiment_id, &query, &headers)?;
    let c = &event.classification;
    let display = map.labels(locale.as_deref())[c.sector_index][c.band_index].clone();
    let mut doc = serde_json::to_value(&event).map_err(|e| ApiError::internal(e.to_string()))?;
    doc["display_label"] = Value::String(display);
    Ok((StatusCode::CREATED, Json(doc)).into_response())
}

pub async fn field_picture(
    State(state): State<AppState>,
    ParticipantSession(session): ParticipantSession,
    form: Result<Multipart, MultipartRejection>,
) -> ApiResult<Response> {
    let fields = body::read_form(&state, body::multipart(form)?).await?;
    let mut image = None;
    let (mut lat, mut lon, mut client_time) = (None, None, None);
    for (name, value) in fields {
        match name.as_str() {
            "image" => image = Some(value),
            "lat" | "lon" => {
                let v: f64 = body::text(&value, &name)?
                    .trim()
                    .parse()
                    .map_err(|_| ApiError::from(Error::InvalidLocation))?;
                if name == "lat" {
                    lat = Some(v);
                } else {
                    lon = Some(v);
                }
            }
            "client_time" => client_time = Some(body::text(&value, &name)?),
            _ => {}
        }
    }
    let image = image.ok_or_else(|| ApiError::invalid("missing 'image' field"))?;
    let location = location(lat, lon)?.ok_or(Error::MissingLocation)?;
    let token = session.token.clone();
    let picture = blocking(&state, move |p| {
        p.submit_field_picture(&token, &image, Some(location), client_time)
    })
    .await?;
    let mut doc = serde_json::to_value(&picture).map_err(|e| ApiError::internal(e.to_string()))?;
    doc["picture_id"] = Value::String(picture.id.clone());
    Ok((StatusCode::CREATED, Json(doc)).into_response())
}

pub async fn picture(
    State(state): State<AppState>,
    principal: Principal,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let lookup = id.clone();
    let (picture, bytes) = blocking(&state, move |p| p.picture(&lookup)).await?;
    if let Principal::Participant(s) = &principal {
        let visible = picture.experiment_id == s.experiment_id
            && (picture.source == PictureSource::Curated
                || picture.uploaded_by.as_deref() == Some(s.participant_id.as_str()));
        if !visible {
            return Err(Error::UnknownPicture(id).into());
        }
    }
    Ok((
        [
            (header::CONTENT_TYPE, picture.media_type.clone()),
            (header::ETAG, format!("\"{}\"", picture.blob_id)),
            (header::CACHE_CONTROL, "private, max-age=86400".to_string()),
        ],
        bytes,
    )
        .into_response())
}
