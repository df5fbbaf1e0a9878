//! HTTP collection service for selection studies.
//!
//! Serves rounds to raters, appends their ballots to a durable JSONL log and
//! exposes live tallies and ensembled images. All state lives under one
//! store directory; see [`store`] for the layout.

pub mod api;
pub mod log;
pub mod store;

pub use api::{router, App, AppError, PublicStudy, API_PREFIX};
pub use log::{BallotLog, LogError};
pub use store::{IngestDelta, Store, StoreError};

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use tokio::net::TcpListener;

#[derive(Clone, Debug, Default)]
pub struct ServeOptions {
    /// Directory with the web UI bundle, served at `/`.
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Runs until `shutdown` resolves, then drains requests and syncs the
/// ballot log.
pub async fn serve<F>(
    app: App,
    listener: TcpListener,
    opts: ServeOptions,
    shutdown: F,
) -> Result<(), ServeError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let app = Arc::new(app);
    let router = router(app.clone(), opts.static_dir);
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await?;
    app.store().log().sync()?;
    tracing::info!("ballot log synced, shut down");
    Ok(())
}
