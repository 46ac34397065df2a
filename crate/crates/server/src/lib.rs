//! HTTP API of the emomap platform.
//!
//! Participants log in with an invitation token or credentials and receive a
//! session bearer token; researchers log in with a username and password.
//! Every error body has the shape `{"error": {"code", "message", "details"}}`
//! where `code` is stable and machine-readable.

use std::future::Future;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Request};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use emomap_core::Platform;
use tokio::net::TcpListener;

mod body;
pub mod error;
pub mod idempotency;
pub mod locale;
pub mod principal;

mod participant;
mod researcher;

pub use error::{ApiError, ApiResult};

/// Room for multipart framing and form fields around the largest image.
const BODY_OVERHEAD: usize = 1024 * 1024;

const IDEMPOTENCY_CAPACITY: usize = 10_000;

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    idempotency: Arc<idempotency::IdempotencyCache>,
    body_limit: usize,
}

impl AppState {
    pub fn new(platform: Arc<Platform>) -> Self {
        let body_limit = platform.config().max_image_bytes + BODY_OVERHEAD;
        Self {
            platform,
            idempotency: Arc::new(idempotency::IdempotencyCache::new(IDEMPOTENCY_CAPACITY)),
            body_limit,
        }
    }
}

/// Runs platform work on the blocking pool: password hashing, image
/// decoding and fsync-ed writes all block.
pub(crate) async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Platform) -> emomap_core::Result<T> + Send + 'static,
{
    let platform = state.platform.clone();
    tokio::task::spawn_blocking(move || f(&platform))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(ApiError::from)
}

async fn log_request(req: Request, next: Next) -> Response {
    let (method, path) = (req.method().clone(), req.uri().path().to_string());
    let started = std::time::Instant::now();
    let res = next.run(req).await;
    tracing::info!(
        %method,
        path,
        status = res.status().as_u16(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "request"
    );
    res
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(platform: Arc<Platform>) -> Router {
    let state = AppState::new(platform);
    let api = Router::new()
        .route("/api/login", post(researcher::login))
        .route(
            "/api/session",
            post(participant::open_session).delete(participant::close_session),
        )
        .route("/api/session/next", get(participant::next))
        .route("/api/tags", post(participant::submit_tag))
        .route("/api/field-pictures", post(participant::field_picture))
        .route("/api/pictures/:id", get(participant::picture))
        .route(
            "/api/experiments",
            get(researcher::list_experiments).post(researcher::create_experiment),
        )
        .route(
            "/api/experiments/:id",
            get(researcher::get_experiment).patch(researcher::update_experiment),
        )
        .route("/api/experiments/:id/activate", post(researcher::activate))
        .route("/api/experiments/:id/finish", post(researcher::finish))
        .route("/api/experiments/:id/pictures", post(researcher::add_pictures))
        .route(
            "/api/experiments/:id/results/users/:pid",
            get(researcher::user_results),
        )
        .route(
            "/api/experiments/:id/results/pictures/:picid",
            get(researcher::picture_results),
        )
        .route("/api/experiments/:id/export.csv", get(researcher::export_csv))
        .route("/api/experiments/:id/map", get(researcher::map))
        .route("/api/invitations", post(researcher::invite))
        .route(
            "/api/participants",
            get(researcher::list_participants).post(researcher::add_participant),
        )
        .route(
            "/api/tag-maps",
            get(researcher::list_tag_maps).post(researcher::put_tag_map),
        )
        .route("/api/tag-maps/:id", get(researcher::get_tag_map))
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(
            state.clone(),
            idempotency::middleware,
        ))
        .layer(DefaultBodyLimit::max(state.body_limit))
        .layer(middleware::from_fn(log_request));
    api.with_state(state)
}

/// Serves the API until `shutdown` resolves, then drains open connections.
pub async fn serve(
    listener: TcpListener,
    platform: Arc<Platform>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(platform))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
