//! HTTP API of the portal.
//!
//! | method | path                               | body             | reply                                   |
//! |--------|------------------------------------|------------------|-----------------------------------------|
//! | POST   | `/api/session`                     | none             | `{session_id, reply, active_agent}`     |
//! | POST   | `/api/session/{id}/utterance`      | `{"text": str}`  | `{reply, active_agent, ended}`          |
//! | GET    | `/api/session/{id}/transcript`     | none             | array of transcript entries             |
//!
//! Errors are `{"error": code, "message": str}` with code `unknown_session`
//! (404), `busy` (409), `session_ended` (410), `bad_request` (400) or
//! `internal` (500, plus `correlation_id`).

use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dialhub_core::portal::{Portal, PortalError};
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

#[derive(Debug, Deserialize)]
pub struct UtteranceBody {
    pub text: String,
}

fn error_response(e: PortalError) -> Response {
    let (status, body) = match &e {
        PortalError::UnknownSession(_) => (
            StatusCode::NOT_FOUND,
            json!({ "error": "unknown_session", "message": e.to_string() }),
        ),
        PortalError::Busy(_) => (StatusCode::CONFLICT, json!({ "error": "busy", "message": e.to_string() })),
        PortalError::SessionEnded(_) => (
            StatusCode::GONE,
            json!({ "error": "session_ended", "message": e.to_string() }),
        ),
        PortalError::Internal { correlation_id, .. } => (
            StatusCode::INTERNAL_SERVER_ERROR,
            json!({ "error": "internal", "message": e.to_string(), "correlation_id": correlation_id }),
        ),
    };
    (status, Json(body)).into_response()
}

async fn run<T: serde::Serialize + Send + 'static>(
    f: impl FnOnce() -> Result<T, PortalError> + Send + 'static,
) -> Response {
    match tokio::task::spawn_blocking(f).await {
        Ok(Ok(body)) => Json(body).into_response(),
        Ok(Err(e)) => error_response(e),
        Err(e) => error_response(PortalError::Internal {
            correlation_id: uuid::Uuid::new_v4().simple().to_string(),
            message: e.to_string(),
        }),
    }
}

async fn create(State(portal): State<Arc<Portal>>) -> Response {
    run(move || portal.create_session()).await
}

async fn utterance(
    State(portal): State<Arc<Portal>>,
    Path(id): Path<String>,
    body: Result<Json<UtteranceBody>, JsonRejection>,
) -> Response {
    let text = match body {
        Ok(Json(b)) => b.text,
        Err(e) => {
            let body = json!({ "error": "bad_request", "message": e.body_text() });
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };
    run(move || portal.post_utterance(&id, &text)).await
}

async fn transcript(State(portal): State<Arc<Portal>>, Path(id): Path<String>) -> Response {
    run(move || portal.get_transcript(&id)).await
}

/// Allowed browser origins; `None` allows any.
pub fn portal_router(portal: Arc<Portal>, cors_origins: Option<&[String]>) -> Router {
    let origin = match cors_origins {
        None => AllowOrigin::any(),
        Some(list) => AllowOrigin::list(list.iter().filter_map(|o| HeaderValue::from_str(o).ok())),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Router::new()
        .route("/api/session", post(create))
        .route("/api/session/{id}/utterance", post(utterance))
        .route("/api/session/{id}/transcript", get(transcript))
        .layer(cors)
        .with_state(portal)
}

/// Expires idle sessions every `every`. Stops once this thread holds the
/// last reference to the portal.
pub fn start_expiry_thread(portal: Arc<Portal>, every: Duration) -> std::thread::JoinHandle<()> {
    std::thread::spawn(move || loop {
        std::thread::sleep(every);
        if Arc::strong_count(&portal) == 1 {
            return;
        }
        let n = portal.expire_idle();
        if n > 0 {
            log::info!("expired {n} idle sessions");
        }
    })
}
