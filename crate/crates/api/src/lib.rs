//! HTTP+JSON service over the segmentation, rating and capture workflows.
//!
//! Every route except `GET /health` requires an `X-Actor-Token` header that
//! maps to an actor id in the [`ServerConfig`]. See `docs/api.md` for the
//! full endpoint reference.

mod config;
mod error;
mod routes;
mod state;

pub use config::ServerConfig;
pub use error::ApiError;
pub use routes::{router, StreamSegments};
pub use state::{Actor, AppState, StartupError, TOKEN_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Startup(#[from] StartupError),
    #[error("cannot bind {0}: {1}")]
    Bind(String, std::io::Error),
    #[error("server: {0}")]
    Io(std::io::Error),
}

/// Opens the data directory, binds `config.bind` and serves until the process exits.
pub async fn serve(config: ServerConfig) -> Result<(), ServeError> {
    let state = AppState::open(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| ServeError::Bind(config.bind.clone(), e))?;
    tracing::info!(addr = %config.bind, "listening");
    axum::serve(listener, router(state))
        .await
        .map_err(ServeError::Io)
}
