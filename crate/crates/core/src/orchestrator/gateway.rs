//! HTTP/JSON gateway for the operator UI.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::{Body, Bytes};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use tower_http::services::ServeDir;

use super::{Orchestrator, OrchestratorError, RecipeParams};

#[derive(Clone)]
pub struct GatewayState {
    pub orchestrator: Orchestrator,
}

impl IntoResponse for OrchestratorError {
    fn into_response(self) -> Response {
        let status = match &self {
            OrchestratorError::InvalidParameters(_) => StatusCode::BAD_REQUEST,
            OrchestratorError::CoupleBusy(_) | OrchestratorError::RunFinished(_) => StatusCode::CONFLICT,
            OrchestratorError::UnknownRun(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

async fn submit(
    State(st): State<GatewayState>,
    body: Result<Json<RecipeParams>, JsonRejection>,
) -> Response {
    let params = match body {
        Ok(Json(p)) => p,
        Err(e) => return OrchestratorError::InvalidParameters(e.body_text()).into_response(),
    };
    match st.orchestrator.submit(&params) {
        Ok(run) => (StatusCode::CREATED, Json(run)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn list(State(st): State<GatewayState>) -> Response {
    Json(st.orchestrator.runs()).into_response()
}

async fn one(State(st): State<GatewayState>, Path(id): Path<String>) -> Response {
    match st.orchestrator.run(&id) {
        Some(run) => Json(run).into_response(),
        None => OrchestratorError::UnknownRun(id).into_response(),
    }
}

async fn abort(State(st): State<GatewayState>, Path(id): Path<String>) -> Response {
    match st.orchestrator.abort(&id) {
        Ok(run) => (StatusCode::ACCEPTED, Json(run)).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn plant(State(st): State<GatewayState>) -> Response {
    Json(st.orchestrator.plant_snapshot().await).into_response()
}

/// Newline-delimited JSON, one trace event per line, live from now on.
async fn events(State(st): State<GatewayState>) -> Response {
    let rx = st.orchestrator.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let mut line = serde_json::to_vec(&ev).expect("trace serializes");
                    line.push(b'\n');
                    return Some((Ok::<_, Infallible>(Bytes::from(line)), rx));
                }
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .body(Body::from_stream(stream))
        .expect("valid response")
}

pub fn router(orchestrator: Orchestrator, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/recipes", post(submit))
        .route("/api/runs", get(list))
        .route("/api/runs/{id}", get(one))
        .route("/api/runs/{id}/abort", post(abort))
        .route("/api/plant", get(plant))
        .route("/api/events", get(events))
        .with_state(GatewayState { orchestrator });
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves the gateway until the listener fails.
pub async fn serve(
    addr: SocketAddr,
    orchestrator: Orchestrator,
    ui_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    axum::serve(listener, router(orchestrator, ui_dir)).await
}
