//! HTTP/JSON service over one dataset: layer listing, region/time queries,
//! edits, and flag review, all under a role-based access policy.
//!
//! Readers work on an immutable snapshot; edits and flag resolutions are
//! serialized through one writer that builds the next snapshot and swaps
//! it in, so a slow reader never blocks a writer.

pub mod api;
pub mod config;
mod error;

use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::routing::{get, post};
use axum::Router;
use guides_core::access::AccessPolicy;
use guides_core::dataset::{load_dataset, Dataset, DatasetError};
use guides_core::model::InfrastructureNetwork;
use guides_core::ontology::Catalog;
use guides_core::repair::FlagLedger;
use thiserror::Error;

pub use config::{ConfigError, ServiceConfig, LISTEN_ENV};
pub use error::ApiError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("cannot listen on `{addr}`: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything one request sees.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub network: InfrastructureNetwork,
    pub ledger: FlagLedger,
    pub catalog: Option<Catalog>,
}

#[derive(Debug)]
struct Shared {
    current: RwLock<Arc<Snapshot>>,
    writer: tokio::sync::Mutex<()>,
    policy: AccessPolicy,
    area_cap_km2: f64,
}

#[derive(Debug, Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

impl AppState {
    pub fn new(dataset: Dataset, policy: AccessPolicy, area_cap_km2: f64) -> Self {
        let snapshot = Snapshot {
            network: dataset.network,
            ledger: dataset.ledger,
            catalog: dataset.catalog,
        };
        Self {
            shared: Arc::new(Shared {
                current: RwLock::new(Arc::new(snapshot)),
                writer: tokio::sync::Mutex::new(()),
                policy,
                area_cap_km2,
            }),
        }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let dataset = load_dataset(&config.dataset)?;
        Ok(Self::new(dataset, config.policy()?, config.area_cap_km2))
    }

    pub fn load(manifest: &Path) -> Result<Self, ServiceError> {
        Self::from_config(&ServiceConfig::new(manifest))
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.shared.current.read().expect("snapshot lock poisoned").clone()
    }

    pub fn policy(&self) -> &AccessPolicy {
        &self.shared.policy
    }

    pub fn area_cap_km2(&self) -> f64 {
        self.shared.area_cap_km2
    }

    /// Run `f` on a private copy of the current snapshot and publish the
    /// copy if `f` succeeds. Writers are serialized.
    pub async fn write<T, E>(&self, f: impl FnOnce(&mut Snapshot) -> Result<T, E>) -> Result<T, E> {
        let _turn = self.shared.writer.lock().await;
        let mut next = Snapshot::clone(&self.snapshot());
        let out = f(&mut next)?;
        if let Some(c) = next.catalog.as_mut() {
            c.refresh(&next.network);
        }
        *self.shared.current.write().expect("snapshot lock poisoned") = Arc::new(next);
        Ok(out)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(api::health))
        .route("/layers", get(api::layers))
        .route("/query", post(api::query))
        .route("/update", post(api::update))
        .route("/flags", get(api::flags))
        .route("/flags/{id}/resolve", post(api::resolve))
        .with_state(state)
}

/// Load the dataset and serve until Ctrl-C. `listen_override` wins over
/// the config file (callers pass the value of [`LISTEN_ENV`] here).
pub async fn serve(config: &ServiceConfig, listen_override: Option<String>) -> Result<(), ServiceError> {
    let state = AppState::from_config(config)?;
    let addr = config.listen_addr(listen_override);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: addr.clone(), source })?;
    eprintln!("guides service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
