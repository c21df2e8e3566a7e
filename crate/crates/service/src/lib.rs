//! HTTP sessions for teaching human learners.
//!
//! A session walks a learner through a group's teaching sequence (the
//! correct label is revealed after every answer) and then a fixed test list
//! (answers are recorded, nothing is revealed). Endpoints:
//!
//! | method | path                      | body                          |
//! |--------|---------------------------|-------------------------------|
//! | POST   | `/sessions`               | `{"group": "strict"}`         |
//! | GET    | `/sessions/{id}/next`     |                               |
//! | POST   | `/sessions/{id}/answer`   | `{"item_id": "x3", "label": 1}` |
//! | GET    | `/sessions/{id}/report`   |                               |
//! | GET    | `/summary`                |                               |
//!
//! Anything else is looked up in the assets directory, if one is set.

mod error;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use crowdteach::Label;
use serde::Deserialize;
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

pub use error::{ServiceError, ServiceResult};
pub use store::{
    Answer, Created, Feedback, GroupSummary, Next, Phase, Report, ServiceConfig, SessionStore,
    CONTROL_GROUP,
};

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub group: String,
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub item_id: String,
    pub label: i64,
}

type Shared = Arc<SessionStore>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ServiceResult<T> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn create(
    State(store): State<Shared>,
    payload: Result<Json<CreateRequest>, JsonRejection>,
) -> ServiceResult<Json<Created>> {
    let req = body(payload)?;
    store.create(&req.group).map(Json)
}

async fn next(State(store): State<Shared>, Path(id): Path<String>) -> ServiceResult<Json<Next>> {
    store.next(&id).map(Json)
}

async fn answer(
    State(store): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<AnswerRequest>, JsonRejection>,
) -> ServiceResult<Json<Feedback>> {
    let req = body(payload)?;
    let label = Label::try_from(req.label).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    store.answer(&id, &req.item_id, label).map(Json)
}

async fn report(
    State(store): State<Shared>,
    Path(id): Path<String>,
) -> ServiceResult<Json<Report>> {
    store.report(&id).map(Json)
}

async fn summary(State(store): State<Shared>) -> Json<Vec<GroupSummary>> {
    Json(store.summary())
}

pub fn router(store: Arc<SessionStore>, assets_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/report", get(report))
        .route("/summary", get(summary))
        .with_state(store);
    let app = match assets_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(CorsLayer::permissive())
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(
    store: SessionStore,
    assets_dir: Option<PathBuf>,
    addr: SocketAddr,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(store), assets_dir)).await
}
