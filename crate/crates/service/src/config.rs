use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Service configuration: a TOML file with `CGPA_*` environment overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// HMAC key for session tokens.
    pub secret: String,
    pub token_ttl_hours: i64,
    /// SQLite file; `:memory:` for an ephemeral store.
    pub store_path: String,
    /// Directory holding versioned artifacts.
    pub artifact_dir: PathBuf,
    /// Artifact imported as version 1 on first start.
    pub artifact_path: Option<PathBuf>,
    /// Labelled survey CSV used for (re)training.
    pub base_corpus: Option<PathBuf>,
    pub admin_emails: Vec<String>,
    /// Model name for retraining (see `ModelKind::from_name`).
    pub model: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub cv_folds: usize,
    pub min_retrain_rows: usize,
    /// Replication count for feedback rows carrying an actual CGPA.
    pub feedback_weight: u32,
    /// Permutations for sampled attributions of non-linear models.
    pub shapley_samples: usize,
    pub n_recommendations: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            secret: String::new(),
            token_ttl_hours: 24,
            store_path: "cgpa.sqlite".into(),
            artifact_dir: PathBuf::from("artifacts"),
            artifact_path: None,
            base_corpus: None,
            admin_emails: Vec::new(),
            model: "ridge".into(),
            seed: 0,
            test_fraction: 0.2,
            cv_folds: 5,
            min_retrain_rows: 50,
            feedback_weight: 1,
            shapley_samples: 500,
            n_recommendations: 3,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads `path` (if given), then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(v) = get("CGPA_HOST") {
            self.host = v;
        }
        if let Some(v) = get("CGPA_PORT") {
            self.port = v.parse().map_err(|_| ServiceError::Config(format!("CGPA_PORT: {v}")))?;
        }
        if let Some(v) = get("CGPA_SECRET") {
            self.secret = v;
        }
        if let Some(v) = get("CGPA_STORE_PATH") {
            self.store_path = v;
        }
        if let Some(v) = get("CGPA_ARTIFACT_DIR") {
            self.artifact_dir = v.into();
        }
        if let Some(v) = get("CGPA_ARTIFACT_PATH") {
            self.artifact_path = Some(v.into());
        }
        if let Some(v) = get("CGPA_BASE_CORPUS") {
            self.base_corpus = Some(v.into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.secret.len() < 16 {
            return Err(ServiceError::Config("secret must be at least 16 bytes".into()));
        }
        if self.token_ttl_hours <= 0 {
            return Err(ServiceError::Config("token_ttl_hours must be positive".into()));
        }
        if self.shapley_samples < 100 {
            return Err(ServiceError::Config("shapley_samples must be >= 100".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_then_env() {
        let mut c = ServiceConfig::from_toml("port = 9000\nsecret = \"abc\"\nadmin_emails = [\"a@b.io\"]\n").unwrap();
        assert_eq!(c.port, 9000);
        assert_eq!(c.model, "ridge");
        c.apply_env(|k| match k {
            "CGPA_PORT" => Some("9100".into()),
            "CGPA_SECRET" => Some("0123456789abcdef".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(c.port, 9100);
        c.validate().unwrap();
        assert!(c.apply_env(|k| (k == "CGPA_PORT").then(|| "x".into())).is_err());
    }

    #[test]
    fn short_secret_rejected() {
        assert!(ServiceConfig::default().validate().is_err());
    }
}
