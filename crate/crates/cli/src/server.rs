//! JSON-over-HTTP session API.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rla_core::engine::Interpretation;
use serde::Serialize;

use crate::error::ApiError;
use crate::store::{CreateSession, SessionStore};

pub const TOKEN_HEADER: &str = "x-rla-token";

#[derive(Debug, Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    /// Shared token required on every request, if set.
    pub token: Option<String>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<(StatusCode, Json<T>), ApiError>;

fn ok<T: Serialize>(value: T) -> ApiResult<T> {
    Ok((StatusCode::OK, Json(value)))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::schema(e.body_text()))
}

async fn create(State(s): State<AppState>, payload: Result<Json<CreateSession>, JsonRejection>) -> Response {
    let result = body(payload).and_then(|req| s.store.create(req));
    match result {
        Ok(env) => (StatusCode::CREATED, Json(env)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn session(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    respond(s.store.envelope(&id).and_then(ok))
}

async fn plan(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    match s.store.plan(&id) {
        Ok(plan) => (StatusCode::CREATED, Json(plan)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn cards(State(s): State<AppState>, Path((id, n)): Path<(String, usize)>) -> Response {
    respond(s.store.cards(&id, n).and_then(ok))
}

#[derive(Serialize)]
struct Recorded {
    round: usize,
    card_id: String,
}

async fn interpretation(
    State(s): State<AppState>,
    Path((id, n)): Path<(String, usize)>,
    payload: Result<Json<Interpretation>, JsonRejection>,
) -> Response {
    let result = body(payload).and_then(|interp| {
        let card_id = interp.card_id.clone();
        s.store.record(&id, n, interp)?;
        Ok(Recorded { round: n, card_id })
    });
    match result {
        Ok(r) => (StatusCode::CREATED, Json(r)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn finalize(State(s): State<AppState>, Path((id, n)): Path<(String, usize)>) -> Response {
    respond(s.store.finalize(&id, n).and_then(ok))
}

async fn report(State(s): State<AppState>, Path(id): Path<String>) -> Response {
    respond(s.store.read(&id, |a| Ok(a.status())).and_then(ok))
}

fn respond<T: Serialize>(r: ApiResult<T>) -> Response {
    match r {
        Ok(v) => v.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn check_token(State(s): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.token {
        let given = req.headers().get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(token.as_str()) {
            return ApiError::new(401, "UNAUTHORIZED", format!("missing or wrong {TOKEN_HEADER} header")).into_response();
        }
    }
    next.run(req).await
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/rounds", post(plan))
        .route("/sessions/{id}/rounds/{n}/cards", get(cards))
        .route("/sessions/{id}/rounds/{n}/interpretations", post(interpretation))
        .route("/sessions/{id}/rounds/{n}/finalize", post(finalize))
        .route("/sessions/{id}/report", get(report))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(state.clone(), check_token))
        .with_state(state)
}

pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
