//! HTTP service for physician review of a cagkit corpus.
//!
//! Serves cases and rendered frames, accepts six-class frame annotations and
//! report reviews into an append-only [`ReviewStore`], and exports the
//! per-model review table. All routes live under `/v1`.

mod api;
mod catalog;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use cagkit_core::review::{ReviewStore, StoreError};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use api::ErrorBody;
use api::router;
pub use catalog::Catalog;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {reason}")]
    BindFailure { addr: String, reason: String },
    #[error("store at {path} is not writable: {reason}")]
    StoreUnwritable { path: PathBuf, reason: String },
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Store(StoreError),
    #[error("server: {0}")]
    Server(String),
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::StoreUnwritable { path, reason } => ServiceError::StoreUnwritable { path, reason },
            other => ServiceError::Store(other),
        }
    }
}

fn default_bind() -> String {
    "127.0.0.1:8080".to_string()
}

fn default_snapshot_every() -> usize {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Corpus JSONL.
    pub corpus: PathBuf,
    /// Directory that `image_ref` paths are relative to.
    pub frame_root: PathBuf,
    #[serde(default)]
    pub split_manifest: Option<PathBuf>,
    /// Candidate manifest; its frames may be annotated too.
    #[serde(default)]
    pub candidates: Option<PathBuf>,
    pub store_dir: PathBuf,
    /// Bearer token to reviewer id. Empty disables authentication.
    #[serde(default)]
    pub tokens: BTreeMap<String, String>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

pub(crate) struct AppState {
    pub catalog: Catalog,
    pub store: RwLock<ReviewStore>,
    pub tokens: BTreeMap<String, String>,
}

pub struct ServiceHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections, lets in-flight requests finish and
    /// writes a store snapshot.
    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.finish().await
    }

    /// Runs until Ctrl-C, then shuts down gracefully.
    pub async fn run_until_ctrl_c(self) -> Result<(), ServiceError> {
        tokio::signal::ctrl_c().await.map_err(|e| ServiceError::Server(e.to_string()))?;
        self.shutdown().await
    }

    async fn finish(self) -> Result<(), ServiceError> {
        self.task
            .await
            .map_err(|e| ServiceError::Server(e.to_string()))?
            .map_err(|e| ServiceError::Server(e.to_string()))?;
        let state = self.state;
        tokio::task::spawn_blocking(move || state.store.write().expect("store lock").snapshot())
            .await
            .map_err(|e| ServiceError::Server(e.to_string()))??;
        Ok(())
    }
}

/// Loads the corpus, opens the store and starts listening.
pub async fn serve(config: ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    let catalog = Catalog::load(
        &config.corpus,
        &config.frame_root,
        config.split_manifest.as_deref(),
        config.candidates.as_deref(),
    )?;
    let store_dir = config.store_dir.clone();
    let snapshot_every = config.snapshot_every;
    let store = tokio::task::spawn_blocking(move || ReviewStore::open(&store_dir, snapshot_every))
        .await
        .map_err(|e| ServiceError::Server(e.to_string()))??;

    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|e| ServiceError::BindFailure { addr: config.bind.clone(), reason: e.to_string() })?;
    let addr = listener
        .local_addr()
        .map_err(|e| ServiceError::BindFailure { addr: config.bind.clone(), reason: e.to_string() })?;

    let state = Arc::new(AppState { catalog, store: RwLock::new(store), tokens: config.tokens });
    let app = router(state.clone());
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServiceHandle { addr, state, shutdown: Some(tx), task })
}
