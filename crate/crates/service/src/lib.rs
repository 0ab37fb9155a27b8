//! HTTP + WebSocket service over one active dataset and query session.

pub mod api;
pub mod codec;
pub mod error;
pub mod state;

use std::future::Future;

pub use api::router;
pub use error::ApiError;
pub use state::{AppState, Frame, ServiceConfig};

/// Serves until `shutdown` resolves, then drains open requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
