//! HTTP server side of the remote agent protocol: `POST /newcall` and
//! `POST /next` over any [`RemoteAgent`], usually an
//! [`InProcessAgent`](dialhub_core::protocol::InProcessAgent) wrapping a
//! handler.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use dialhub_core::protocol::{decode, encode, ErrorCode, NewCallRequest, NextRequest, ProtocolError, RemoteAgent};
use serde::Serialize;

fn status_for(code: ErrorCode) -> StatusCode {
    match code {
        ErrorCode::SessionUnknown => StatusCode::NOT_FOUND,
        ErrorCode::Refused => StatusCode::CONFLICT,
        ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
        ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (status, [("content-type", "application/json")], encode(body)).into_response()
}

fn respond<T: Serialize>(result: Result<T, ProtocolError>) -> Response {
    match result {
        Ok(body) => json_response(StatusCode::OK, &body),
        Err(e) => json_response(status_for(e.code()), &e.to_response()),
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ProtocolError> + Send + 'static,
) -> Result<T, ProtocolError> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ProtocolError::AgentFailed(format!("handler task failed: {e}"))))
}

async fn newcall(State(agent): State<Arc<dyn RemoteAgent>>, body: String) -> Response {
    respond(
        blocking(move || {
            let req: NewCallRequest = decode(&body)?;
            agent.new_call(&req.user_id, &req.s0)
        })
        .await,
    )
}

async fn next(State(agent): State<Arc<dyn RemoteAgent>>, body: String) -> Response {
    respond(
        blocking(move || {
            let req: NextRequest = decode(&body)?;
            agent.next(&req.token, &req.utt)
        })
        .await,
    )
}

pub fn agent_router(agent: Arc<dyn RemoteAgent>) -> Router {
    Router::new()
        .route("/newcall", post(newcall))
        .route("/next", post(next))
        .with_state(agent)
}
