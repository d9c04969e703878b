//! Prediction service: accounts, explained predictions with
//! recommendations, feedback capture and versioned model artifacts.

mod api;
pub mod auth;
mod config;
mod error;
pub mod registry;
pub mod store;

pub use api::{
    router, ActivateRequest, FeedbackRequest, FeedbackResponse, LoginRequest, LoginResponse, ModelInfo,
    PredictionRecord, RegisterRequest, RegisterResponse, RetrainResponse,
};
pub use config::ServiceConfig;
pub use error::{ErrorBody, ServiceError};

use std::sync::{Arc, Mutex};

use cgpa_core::data::FactorSchema;

use auth::TokenSigner;
use registry::Registry;
use store::Store;

/// Shared by every request handler.
pub struct AppState {
    pub config: ServiceConfig,
    pub schema: FactorSchema,
    pub signer: TokenSigner,
    pub store: Mutex<Store>,
    pub registry: Registry,
    /// Serializes retraining runs.
    retrain: Mutex<()>,
}

impl AppState {
    /// Validates the configuration, opens the store and restores or
    /// bootstraps the served model.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        config.validate()?;
        let schema = FactorSchema::builtin();
        let mut store = Store::open(&config.store_path)?;
        let registry = Registry::bootstrap(&config, &schema, &mut store)?;
        Ok(Arc::new(Self {
            signer: TokenSigner::new(&config.secret, config.token_ttl_hours),
            config,
            schema,
            store: Mutex::new(store),
            registry,
            retrain: Mutex::new(()),
        }))
    }

    fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Binds and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", config.host, config.port);
    let state = AppState::open(config)?;
    match state.registry.current() {
        Some(m) => tracing::info!(version = m.version, "serving model"),
        None => tracing::warn!("no model artifact; predictions unavailable until one is activated"),
    }
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| ServiceError::Config(format!("bind {addr}: {e}")))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Config(e.to_string()))
}
