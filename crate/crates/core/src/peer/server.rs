use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::Shared;
use crate::clock;
use crate::metrics::{EventKind, RoundEvent};

pub const VERSION_HEADER: &str = "x-edgefl-version";
pub const PRODUCER_HEADER: &str = "x-edgefl-producer";

/// Optional query parameters a fetching peer attaches so the server can log
/// the matching send event.
#[derive(Debug, Default, Deserialize)]
pub(crate) struct FetchParams {
    round: Option<u64>,
    requester: Option<String>,
}

async fn latest_model(
    State(shared): State<Arc<Shared>>,
    Query(params): Query<FetchParams>,
) -> Response {
    let Some(snapshot) = shared.latest.load_full() else {
        return (StatusCode::NOT_FOUND, Json(json!({ "error": "no model" }))).into_response();
    };
    if let (Some(requester), Some(round)) = (params.requester, params.round) {
        shared.events.record(
            RoundEvent::new(
                &shared.hostname,
                round,
                EventKind::Send,
                clock::monotonic_ms(),
            )
            .with_counterpart(requester, snapshot.weights.version()),
        );
    }
    if !shared.link_delay.is_zero() {
        tokio::time::sleep(shared.link_delay).await;
    }
    let mut resp = (StatusCode::OK, snapshot.bytes.clone()).into_response();
    let headers = resp.headers_mut();
    headers.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static("application/octet-stream"),
    );
    headers.insert(
        VERSION_HEADER,
        HeaderValue::from(snapshot.weights.version()),
    );
    if let Ok(v) = HeaderValue::from_str(snapshot.weights.producer()) {
        headers.insert(PRODUCER_HEADER, v);
    }
    resp
}

pub(crate) fn model_router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/latest_model", get(latest_model))
        .with_state(shared)
}
