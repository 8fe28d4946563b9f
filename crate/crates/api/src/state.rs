use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::FromRequestParts;
use axum::http::request::Parts;
use thiserror::Error;

use segrate_core::capture::{CaptureDesk, StubRig, VideoLibrary};
use segrate_core::rating::{RatingDesk, RatingForm};
use segrate_core::{Catalog, EventStore};

use crate::config::ServerConfig;
use crate::error::ApiError;

pub const TOKEN_HEADER: &str = "x-actor-token";

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("rating form: {0}")]
    Form(String),
    #[error("data directory {path}: {message}")]
    DataDir { path: String, message: String },
}

struct Inner {
    catalog: Arc<Catalog>,
    store: EventStore,
    desk: Mutex<RatingDesk>,
    capture: Mutex<CaptureDesk>,
    library: Mutex<VideoLibrary>,
    writes: Mutex<()>,
    tokens: BTreeMap<String, String>,
    raters: Vec<String>,
}

/// Shared service state. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl AppState {
    pub fn in_memory(
        catalog: Arc<Catalog>,
        form: RatingForm,
        raters_per_video: usize,
        raters: Vec<String>,
        tokens: BTreeMap<String, String>,
    ) -> Self {
        AppState {
            inner: Arc::new(Inner {
                store: EventStore::in_memory(catalog.clone()),
                desk: Mutex::new(RatingDesk::in_memory(
                    catalog.clone(),
                    form,
                    raters_per_video,
                )),
                capture: Mutex::new(CaptureDesk::in_memory(Box::new(StubRig))),
                library: Mutex::new(VideoLibrary::in_memory()),
                writes: Mutex::new(()),
                catalog,
                tokens,
                raters,
            }),
        }
    }

    /// Loads the catalog and form and opens all journals under `data_dir`.
    pub fn open(config: &ServerConfig) -> Result<Self, StartupError> {
        let catalog = match &config.catalog_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| StartupError::Catalog(format!("{}: {e}", p.display())))?;
                Catalog::from_json(&text).map_err(|e| StartupError::Catalog(e.to_string()))?
            }
            None => Catalog::default_catalog(),
        };
        let form = match &config.rating_form_path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| StartupError::Form(format!("{}: {e}", p.display())))?;
                RatingForm::from_json(&text).map_err(|e| StartupError::Form(e.to_string()))?
            }
            None => RatingForm::default(),
        };
        let dir = &config.data_dir;
        let data_err = |message: String| StartupError::DataDir {
            path: dir.display().to_string(),
            message,
        };
        let catalog = Arc::new(catalog);
        let store = EventStore::open(dir, catalog.clone()).map_err(|e| data_err(e.to_string()))?;
        let desk = RatingDesk::open(dir, catalog.clone(), form, config.raters_per_video)
            .map_err(|e| data_err(e.to_string()))?;
        let capture =
            CaptureDesk::open(dir, Box::new(StubRig)).map_err(|e| data_err(e.to_string()))?;
        let library = VideoLibrary::open(dir).map_err(|e| data_err(e.to_string()))?;
        Ok(AppState {
            inner: Arc::new(Inner {
                catalog,
                store,
                desk: Mutex::new(desk),
                capture: Mutex::new(capture),
                library: Mutex::new(library),
                writes: Mutex::new(()),
                tokens: config.tokens.clone(),
                raters: config.raters.clone(),
            }),
        })
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.inner.catalog
    }

    pub fn store(&self) -> &EventStore {
        &self.inner.store
    }

    pub fn desk(&self) -> MutexGuard<'_, RatingDesk> {
        lock(&self.inner.desk)
    }

    pub fn capture(&self) -> MutexGuard<'_, CaptureDesk> {
        lock(&self.inner.capture)
    }

    pub fn library(&self) -> MutexGuard<'_, VideoLibrary> {
        lock(&self.inner.library)
    }

    /// Serializes event writes so that pre-append checks see a stable stream.
    pub fn write_guard(&self) -> MutexGuard<'_, ()> {
        lock(&self.inner.writes)
    }

    pub fn raters(&self) -> &[String] {
        &self.inner.raters
    }

    pub fn actor_for(&self, token: &str) -> Option<&str> {
        self.inner.tokens.get(token).map(String::as_str)
    }
}

/// The caller's actor id, resolved from the `X-Actor-Token` header.
#[derive(Debug, Clone)]
pub struct Actor(pub String);

impl FromRequestParts<AppState> for Actor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        parts
            .headers
            .get(TOKEN_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|t| state.actor_for(t))
            .map(|a| Actor(a.to_string()))
            .ok_or_else(ApiError::unauthorized)
    }
}
