//! Segmenter adapter endpoints that expose a backend over the framed stdio
//! protocol or over HTTP, for use as an external backend.

use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use glanceseg::segmenter::protocol::{AdapterServer, Envelope, Request, Response};
use glanceseg::SegmenterBackend;

/// Serves length-prefixed requests from stdin until it closes.
pub fn serve_stdio(backend: Arc<dyn SegmenterBackend>) -> anyhow::Result<()> {
    let mut server = AdapterServer::new(backend);
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    server.serve(&mut stdin.lock(), &mut stdout.lock())?;
    Ok(())
}

/// One `POST /` per request envelope.
pub fn http_router(backend: Arc<dyn SegmenterBackend>) -> Router {
    let server = Arc::new(Mutex::new(AdapterServer::new(backend)));
    Router::new()
        .route("/", post(handle))
        .layer(axum::extract::DefaultBodyLimit::max(crate::service::MAX_BODY_BYTES))
        .with_state(server)
}

async fn handle(
    State(server): State<Arc<Mutex<AdapterServer>>>,
    Json(req): Json<Envelope<Request>>,
) -> Json<Envelope<Response>> {
    let out = tokio::task::spawn_blocking(move || {
        let body = server.lock().unwrap().handle(req.body);
        Envelope { id: req.id, body }
    })
    .await
    .expect("adapter task panicked");
    Json(out)
}

pub async fn serve_http(addr: &str, backend: Arc<dyn SegmenterBackend>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("adapter listening on {}", listener.local_addr()?);
    axum::serve(listener, http_router(backend)).await?;
    Ok(())
}
