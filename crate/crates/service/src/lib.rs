//! HTTP service over the retrieval library: topic variants, search, manual
//! query sessions with an out-of-vocabulary export gate, run fusion and
//! evaluation. Also serves the generator wire protocol from mocks.

pub mod api;
pub mod config;
pub mod error;
pub mod mock_backend;
pub mod remote;
pub mod session;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use gar_core::generation::{GeneratorConfig, Topic};
use gar_core::pipeline::{PipelineClients, StoreSet};

pub use config::{ConfigError, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use mock_backend::mock_backend_router;
pub use session::{Session, SessionStore};

/// Shared, read-mostly state behind every handler.
#[derive(Debug)]
pub struct AppState {
    pub topics: BTreeMap<u32, Topic>,
    pub clients: PipelineClients,
    pub stores: StoreSet,
    pub generation: GeneratorConfig,
    pub search: config::SearchConfig,
    pub sessions: SessionStore,
}

impl AppState {
    pub fn new(topics: Vec<Topic>, clients: PipelineClients, stores: StoreSet) -> Self {
        Self {
            topics: topics.into_iter().map(|t| (t.id, t)).collect(),
            clients,
            stores,
            generation: GeneratorConfig::default(),
            search: config::SearchConfig::default(),
            sessions: SessionStore::in_memory(),
        }
    }

    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ConfigError> {
        let bank = cfg.load_bank()?;
        let sessions = match &cfg.journal {
            Some(p) => SessionStore::with_journal(p).map_err(|source| ConfigError::Io {
                path: p.clone(),
                source,
            })?,
            None => SessionStore::in_memory(),
        };
        Ok(Self {
            topics: cfg.load_topics()?.into_iter().map(|t| (t.id, t)).collect(),
            clients: cfg.clients(bank)?,
            stores: cfg.load_stores()?,
            generation: cfg.generation.clone(),
            search: cfg.search.clone(),
            sessions,
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(api::healthz))
        .route("/topics", get(api::list_topics))
        .route("/topics/{id}/variants", post(api::topic_variants))
        .route("/concepts/oov", get(api::concepts_oov))
        .route("/search", post(api::search))
        .route("/sessions/{id}", get(api::get_session))
        .route("/sessions/{id}/select", post(api::select))
        .route("/runs/manual-export", post(api::manual_export))
        .route("/fuse", post(api::fuse))
        .route("/eval", post(api::eval))
        .with_state(state)
}

/// Serves `router` on `listen` until the process ends.
pub async fn serve_router(router: Router, listen: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    axum::serve(listener, router).await
}

pub async fn serve(cfg: &ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let state = AppState::from_config(cfg)?;
    serve_router(router(Arc::new(state)), &cfg.listen).await?;
    Ok(())
}
