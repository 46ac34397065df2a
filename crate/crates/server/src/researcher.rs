//! Researcher endpoints: experiment administration and results.

use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use emomap_core::model::{Experiment, Handedness, Participant};
use emomap_core::platform::{ExperimentDraft, ExperimentPatch, NewParticipant};
use emomap_core::wheel::TagMapDoc;
use emomap_core::Error;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult};
use crate::principal::Researcher;
use crate::{blocking, body, AppState};

#[derive(Deserialize)]
struct LoginBody {
    username: String,
    password: String,
}

pub async fn login(State(state): State<AppState>, raw: Bytes) -> ApiResult<Response> {
    let LoginBody { username, password } = body::json(&raw)?;
    let login = blocking(&state, move |p| p.login_researcher(&username, &password)).await?;
    Ok(Json(login).into_response())
}

pub async fn list_experiments(State(state): State<AppState>, _: Researcher) -> Json<Vec<Experiment>> {
    Json(state.platform.experiments())
}

pub async fn create_experiment(
    State(state): State<AppState>,
    _: Researcher,
    raw: Bytes,
) -> ApiResult<Response> {
    let draft: ExperimentDraft = body::json(&raw)?;
    let exp = blocking(&state, move |p| p.create_experiment(draft)).await?;
    Ok((StatusCode::CREATED, Json(exp)).into_response())
}

pub async fn get_experiment(
    State(state): State<AppState>,
    _: Researcher,
    Path(id): Path<String>,
) -> ApiResult<Json<Experiment>> {
    Ok(Json(state.platform.experiment(&id)?))
}

pub async fn update_experiment(
    State(state): State<AppState>,
    _: Researcher,
    Path(id): Path<String>,
    raw: Bytes,
) -> ApiResult<Json<Experiment>> {
    let patch: ExperimentPatch = body::json(&raw)?;
    Ok(Json(blocking(&state, move |p| p.update_experiment(&id, patch)).await?))
}

pub async fn activate(
    State(state): State<AppState>,
    _: Researcher,
    Path(id): Path<String>,
) -> ApiResult<Json<Experiment>> {
    Ok(Json(blocking(&state, move |p| p.activate(&id)).await?))
}

pub async fn finish(
    State(state): State<AppState>,
    _: Researcher,
    Path(id): Path<String>,
) -> ApiResult<Json<Experiment>> {
    Ok(Json(blocking(&state, move |p| p.finish(&id)).await?))
}

/// Every file part of the form becomes a picture, in form order.
pub async fn add_pictures(
    State(state): State<AppState>,
    _: Researcher,
    Path(id): Path<String>,
    form: Result<Multipart, MultipartRejection>,
) -> ApiResult<Response> {
    let images: Vec<Bytes> = body::read_form(&state, body::multipart(form)?)
        .await?
        .into_iter()
        .filter(|(name, _)| name == "image")
        .map(|(_, b)| b)
        .collect();
    if images.is_empty() {
        return Err(ApiError::invalid("missing 'image' field"));
    }
    let pictures = blocking(&state, move |p| {
        images
            .iter()
            .map(|bytes| p.add_curated_picture(&id, bytes))
            .collect::<emomap_core::Result<Vec<_>>>()
    })
    .await?;
    Ok((StatusCode::CREATED, Json(pictures)).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InvitationBody {
    experiment_id: String,
    participant_id: String,
    #[serde(default)]
    expires_at: Option<DateTime<Utc>>,
}

pub async fn invite(
    State(state): State<AppState>,
    _: Researcher,
    raw: Bytes,
) -> ApiResult<Response> {
    let b: InvitationBody = body::json(&raw)?;
    let inv = blocking(&state, move |p| {
        p.create_invitation(&b.experiment_id, &b.participant_id, b.expires_at)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(inv)).into_response())
}

/// A participant without the password hash.
#[derive(Serialize)]
pub struct ParticipantView {
    id: String,
    display_name: String,
    username: Option<String>,
    handedness: Handedness,
}

impl From<Participant> for ParticipantView {
    fn from(p: Participant) -> Self {
        Self {
            id: p.id,
            display_name: p.display_name,
            username: p.credentials.map(|c| c.username),
            handedness: p.handedness,
        }
    }
}

pub async fn list_participants(
    State(state): State<AppState>,
    _: Researcher,
) -> Json<Vec<ParticipantView>> {
    Json(state.platform.participants().into_iter().map(Into::into).collect())
}

pub async fn add_participant(
    State(state): State<AppState>,
    _: Researcher,
    raw: Bytes,
) -> ApiResult<Response> {
    let new: NewParticipant = body::json(&raw)?;
    let p = blocking(&state, move |p| p.add_participant(new)).await?;
    Ok((StatusCode::CREATED, Json(ParticipantView::from(p))).into_response())
}

pub async fn list_tag_maps(
    State(state): State<AppState>,
    _: Researcher,
) -> Json<Vec<emomap_core::TagMap>> {
    Json(state.platform.tag_maps())
}

pub async fn put_tag_map(
    State(state): State<AppState>,
    _: Researcher,
    raw: Bytes,
) -> ApiResult<Response> {
    let doc: TagMapDoc<f64> = body::json(&raw)?;
    let map = blocking(&state, move |p| p.put_tag_map(doc)).await?;
    Ok((StatusCode::CREATED, Json(map)).into_response())
}

pub async fn get_tag_map(
    State(state): State<AppState>,
    _: Researcher,
    Path(id): Path<String>,
) -> ApiResult<Json<emomap_core::TagMap>> {
    state.platform.tag_map(&id).map(Json).map_err(|e| {
        let mut err = ApiError::from(e);
        // here the id names the resource itself
        err.status = StatusCode::NOT_FOUND;
        err
    })
}

pub async fn user_results(
    State(state): State<AppState>,
    _: Researcher,
    Path((id, pid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let view = blocking(&state, move |p| p.per_user_view(&id, &pid)).await?;
    Ok(Json(view).into_response())
}

pub async fn picture_results(
    State(state): State<AppState>,
    _: Researcher,
    Path((id, picid)): Path<(String, String)>,
) -> ApiResult<Response> {
    let view = blocking(&state, move |p| p.per_picture_view(&id, &picid)).await?;
    Ok(Json(view).into_response())
}

pub async fn export_csv(
    State(state): State<AppState>,
    _: Researcher,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let csv = blocking(&state, move |p| p.export_csv(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

pub async fn map(
    State(state): State<AppState>,
    _: Researcher,
    Path(id): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let cell_size: f64 = query
        .get("cell_size")
        .ok_or_else(|| ApiError::from(Error::InvalidCellSize))?
        .parse()
        .map_err(|_| ApiError::from(Error::InvalidCellSize))?;
    let grid = blocking(&state, move |p| p.grid(&id, cell_size)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], grid.to_json()).into_response())
}
