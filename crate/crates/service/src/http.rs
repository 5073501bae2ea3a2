//! HTTP surface: `POST /v1/estimate`, `GET /v1/stats`, `GET|POST /v1/model`.

use std::io;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;

use crate::api::{ErrorBody, EstimateRequest};
use crate::engine::Engine;
use crate::error::ServiceError;
use crate::log::scan_stats;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody {
            error: self.code().to_string(),
            message: self.to_string(),
            field: self.field().map(str::to_string),
        };
        (status, Json(body)).into_response()
    }
}

async fn estimate(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    let req: EstimateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return ServiceError::BadRequest(e.to_string()).into_response(),
    };
    match engine.handle_estimate(req).await {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn stats(State(engine): State<Arc<Engine>>) -> Response {
    let dir = engine.log_dir().to_path_buf();
    match tokio::task::spawn_blocking(move || scan_stats(&dir)).await {
        Ok(Ok(s)) => Json(s).into_response(),
        Ok(Err(e)) => ServiceError::Internal(e.to_string()).into_response(),
        Err(e) => ServiceError::Internal(e.to_string()).into_response(),
    }
}

async fn model_info(State(engine): State<Arc<Engine>>) -> Response {
    match engine.current_model() {
        Some(m) => Json(m.info()).into_response(),
        None => ServiceError::NoModel.into_response(),
    }
}

async fn upload_model(State(engine): State<Arc<Engine>>, body: Bytes) -> Response {
    match engine.load_model(&body) {
        Ok(m) => Json(m.info()).into_response(),
        Err(e) => e.into_response(),
    }
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/v1/estimate", post(estimate))
        .route("/v1/stats", get(stats))
        .route("/v1/model", get(model_info).post(upload_model))
        .layer(DefaultBodyLimit::max(1 << 20))
        .with_state(engine)
}

pub async fn serve(listener: TcpListener, engine: Arc<Engine>) -> io::Result<()> {
    axum::serve(listener, router(engine)).await
}
