use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tower_http::cors::CorsLayer;

use super::wire::ApiError;
use super::{handle_examples, handle_health, handle_intervene, handle_predict, ServingState};
use crate::concepts::schema_json;
use crate::Result;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(ApiError::from_json)
}

async fn schema() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/json")], schema_json())
}

async fn health(State(s): State<Arc<ServingState>>) -> impl IntoResponse {
    Json(handle_health(&s))
}

async fn examples(
    State(s): State<Arc<ServingState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<impl IntoResponse, ApiError> {
    let limit = q
        .get("limit")
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| ApiError::bad_request("limit", format!("`{v}` is not a non-negative integer")))
        })
        .transpose()?;
    Ok(Json(handle_examples(&s, limit)))
}

async fn predict(State(s): State<Arc<ServingState>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(handle_predict(&s, &parse_body(&body)?)?))
}

async fn intervene(State(s): State<Arc<ServingState>>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(handle_intervene(&s, &parse_body(&body)?)?))
}

/// All endpoints, with permissive CORS so a browser panel on another port can
/// call them.
pub fn router(state: Arc<ServingState>) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/health", get(health))
        .route("/examples", get(examples))
        .route("/predict", post(predict))
        .route("/intervene", post(intervene))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<ServingState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(state: Arc<ServingState>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} on http://{}", state.tag(), listener.local_addr()?);
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
