//! HTTP front for [`jobrec::service::Service`].
//!
//! | Method | Path | Body | Response |
//! |---|---|---|---|
//! | `GET` | `/health` | | `{"status":"ok"}` |
//! | `POST` | `/sessions` | `{"user"}` | `201` with the session snapshot |
//! | `GET` | `/sessions/{id}` | | the session snapshot |
//! | `DELETE` | `/sessions/{id}` | | `204` |
//! | `POST` | `/sessions/{id}/messages` | `{"text"}` | `text/event-stream`, one event per frame |
//! | `POST` | `/sessions/{id}/interactions` | `{"opening","kind"}` | the session's interest state |
//!
//! Every SSE frame carries `event: <type>`, `id: <seq>` and the JSON event
//! (schema `v: 1`) as its data line. Errors are JSON `{"error","message"}`.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use jobrec::kgraph::GraphError;
use jobrec::service::{ResponseEvent, Service, ServiceError, SessionState};
use jobrec::tools::{InteractionKind, InterestState};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::mpsc;

#[derive(Debug, Deserialize)]
pub struct OpenSession {
    pub user: String,
}

#[derive(Debug, Deserialize)]
pub struct PostMessage {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct PostInteraction {
    pub opening: String,
    pub kind: InteractionKind,
}

/// A [`ServiceError`] rendered as an HTTP response.
#[derive(Debug)]
pub struct ApiError(pub ServiceError);

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match &self.0 {
            ServiceError::ProfileNotFound(_)
            | ServiceError::SessionNotFound(_)
            | ServiceError::Graph(GraphError::NodeNotFound(_)) => StatusCode::NOT_FOUND,
            ServiceError::ProfileUnavailable(_) | ServiceError::StoreUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Graph(_) | ServiceError::NoFamily(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Config(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match &self.0 {
            ServiceError::ProfileNotFound(_) => "profile_not_found",
            ServiceError::ProfileUnavailable(_) => "profile_unavailable",
            ServiceError::StoreUnavailable(_) => "store_unavailable",
            ServiceError::SessionNotFound(_) => "session_not_found",
            ServiceError::Graph(GraphError::NodeNotFound(_)) => "node_not_found",
            ServiceError::Graph(_) => "invalid_node",
            ServiceError::NoFamily(_) => "no_family",
            ServiceError::Config(_) => "config",
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": self.code(), "message": self.0.to_string()});
        (self.status(), Json(body)).into_response()
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/interactions", post(post_interaction))
        .with_state(service)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn open_session(
    State(service): State<Arc<Service>>,
    Json(body): Json<OpenSession>,
) -> Result<(StatusCode, Json<SessionState>), ApiError> {
    let state = tokio::task::spawn_blocking(move || service.open_session(&body.user))
        .await
        .expect("open_session task")?;
    log::info!("opened {} for {}", state.session_id, state.user_id);
    Ok((StatusCode::CREATED, Json(state)))
}

async fn get_session(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
) -> Result<Json<SessionState>, ApiError> {
    service
        .session(&id)
        .map(Json)
        .ok_or(ApiError(ServiceError::SessionNotFound(id)))
}

async fn close_session(State(service): State<Arc<Service>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    if service.close_session(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError(ServiceError::SessionNotFound(id)))
    }
}

fn frame(event: &ResponseEvent) -> Event {
    let kind = serde_json::to_value(event.kind).ok();
    let name = kind.as_ref().and_then(|k| k.as_str()).unwrap_or("message");
    Event::default()
        .event(name)
        .id(event.seq.to_string())
        .json_data(event)
        .expect("response events serialize")
}

async fn post_message(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(body): Json<PostMessage>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    if service.session(&id).is_none() {
        return Err(ApiError(ServiceError::SessionNotFound(id)));
    }
    let (tx, rx) = mpsc::unbounded_channel::<ResponseEvent>();
    tokio::task::spawn_blocking(move || {
        let result = service.handle_message(&id, &body.text, &mut |event| {
            let _ = tx.send(event.clone());
        });
        if let Err(e) = result {
            log::warn!("message for {id} failed: {e}");
        }
    });
    let events = stream::unfold(rx, |mut rx| async move {
        let event = rx.recv().await?;
        Some((Ok(frame(&event)), rx))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

async fn post_interaction(
    State(service): State<Arc<Service>>,
    Path(id): Path<String>,
    Json(body): Json<PostInteraction>,
) -> Result<Json<InterestState>, ApiError> {
    let state = service.record_interaction(&id, &body.opening, body.kind)?;
    Ok(Json(state))
}
