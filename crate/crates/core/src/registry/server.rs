use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::{Registry, RegistryError};

#[derive(Deserialize)]
struct RegisterBody {
    hostname: String,
    address: String,
}

#[derive(Deserialize)]
struct UnregisterBody {
    hostname: String,
}

fn bad_request(msg: impl std::fmt::Display) -> Response {
    (
        StatusCode::BAD_REQUEST,
        Json(json!({ "error": msg.to_string() })),
    )
        .into_response()
}

fn outcome(r: Result<(), RegistryError>) -> Response {
    match r {
        Ok(()) => Json(json!({ "status": "ok" })).into_response(),
        Err(e) => bad_request(e),
    }
}

async fn register(State(reg): State<Arc<Registry>>, body: Bytes) -> Response {
    match serde_json::from_slice::<RegisterBody>(&body) {
        Ok(b) => outcome(reg.register(&b.hostname, &b.address)),
        Err(e) => bad_request(format!("invalid body: {e}")),
    }
}

async fn unregister(State(reg): State<Arc<Registry>>, body: Bytes) -> Response {
    match serde_json::from_slice::<UnregisterBody>(&body) {
        Ok(b) => outcome(reg.unregister(&b.hostname)),
        Err(e) => bad_request(format!("invalid body: {e}")),
    }
}

async fn peers(State(reg): State<Arc<Registry>>) -> Response {
    Json(json!({ "peers": reg.peers() })).into_response()
}

pub fn registry_router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/register", post(register))
        .route("/unregister", post(unregister))
        .route("/peers", get(peers))
        .with_state(registry)
}

/// A registry served over HTTP on the current tokio runtime.
pub struct RegistryServer {
    registry: Arc<Registry>,
    local_addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl RegistryServer {
    pub async fn start(bind: SocketAddr) -> std::io::Result<Self> {
        Self::start_with(bind, Arc::new(Registry::new())).await
    }

    pub async fn start_with(bind: SocketAddr, registry: Arc<Registry>) -> std::io::Result<Self> {
        let listener = TcpListener::bind(bind).await?;
        let local_addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = registry_router(Arc::clone(&registry));
        let task = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = serve.await {
                log::error!("registry server failed: {e}");
            }
        });
        log::info!("registry listening on {local_addr}");
        Ok(Self {
            registry,
            local_addr,
            shutdown: Some(tx),
            task: Some(task),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.local_addr)
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Stops accepting connections and waits for the server task.
    pub async fn shutdown(mut self) {
        self.stop().await;
    }

    async fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Serves until the task ends (used by the command-line entry point).
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for RegistryServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
