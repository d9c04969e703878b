use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use cgpa_core::data::{load_csv, FactorSchema, StudentRecord, TARGET};
use cgpa_core::explain::{feature_domains, FeatureDomain};
use cgpa_core::predictors::{train_pipeline, Artifact, ModelSpec, Task, TrainConfig};

use crate::store::{ArtifactRow, Store};
use crate::{ServiceConfig, ServiceError};

/// A loaded artifact with everything a prediction needs. Immutable once
/// published.
pub struct ActiveModel {
    pub version: i64,
    pub sha256: String,
    pub artifact: Artifact,
    pub domains: Vec<FeatureDomain>,
}

impl ActiveModel {
    fn new(version: i64, sha256: String, artifact: Artifact, schema: &FactorSchema) -> Result<Self, ServiceError> {
        if artifact.task() != Task::Regression {
            return Err(ServiceError::ArtifactCorrupt("serving requires a regression artifact".into()));
        }
        if artifact.schema_hash != schema.hash() {
            return Err(ServiceError::ArtifactCorrupt("artifact was trained on a different schema".into()));
        }
        let domains = feature_domains(&artifact, schema).map_err(|e| ServiceError::ArtifactCorrupt(e.to_string()))?;
        Ok(Self { version, sha256, artifact, domains })
    }
}

/// Versioned artifacts on disk plus the currently served one.
pub struct Registry {
    dir: PathBuf,
    active: RwLock<Option<Arc<ActiveModel>>>,
}

pub fn artifact_file(dir: &Path, version: i64) -> PathBuf {
    dir.join(format!("model-v{version}.json"))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

impl Registry {
    /// Restores the active artifact, or on first start imports
    /// `artifact_path` (or trains on `base_corpus`) as version 1.
    pub fn bootstrap(config: &ServiceConfig, schema: &FactorSchema, store: &mut Store) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&config.artifact_dir)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", config.artifact_dir.display())))?;
        let reg = Registry {
            dir: config.artifact_dir.clone(),
            active: RwLock::new(None),
        };
        let rows = store.artifacts()?;
        if let Some(row) = rows.iter().find(|r| r.active) {
            let m = reg.load(row, schema)?;
            *reg.active.write().expect("registry lock") = Some(Arc::new(m));
            return Ok(reg);
        }
        if !rows.is_empty() {
            return Ok(reg);
        }
        let initial = match (&config.artifact_path, &config.base_corpus) {
            (Some(p), _) => Some(Artifact::load(p, None).map_err(|e| ServiceError::ArtifactCorrupt(e.to_string()))?),
            (None, Some(_)) => match train(config, schema, &[]) {
                Ok(a) => Some(a),
                Err(e @ ServiceError::InsufficientData { .. }) => {
                    tracing::warn!(error = %e, "no initial model");
                    None
                }
                Err(e) => return Err(e),
            },
            (None, None) => None,
        };
        if let Some(a) = initial {
            let row = reg.publish(store, &a)?;
            reg.activate(store, row.version, schema)?;
        }
        Ok(reg)
    }

    pub fn current(&self) -> Option<Arc<ActiveModel>> {
        self.active.read().expect("registry lock").clone()
    }

    /// Writes `artifact` as the next version without activating it.
    pub fn publish(&self, store: &Store, artifact: &Artifact) -> Result<ArtifactRow, ServiceError> {
        let version = store.next_version()?;
        let path = artifact_file(&self.dir, version);
        let sha256 = artifact.save(&path)?;
        let row = ArtifactRow {
            version,
            path: path.to_string_lossy().into_owned(),
            sha256,
            created_at: now(),
            active: false,
        };
        store.insert_artifact(&row)?;
        Ok(row)
    }

    fn load(&self, row: &ArtifactRow, schema: &FactorSchema) -> Result<ActiveModel, ServiceError> {
        let a = Artifact::load(Path::new(&row.path), Some(&row.sha256))
            .map_err(|e| ServiceError::ArtifactCorrupt(e.to_string()))?;
        ActiveModel::new(row.version, row.sha256.clone(), a, schema)
    }

    /// Verifies and loads `version`, then swaps it in. Requests holding the
    /// previous `Arc` finish on it.
    pub fn activate(&self, store: &mut Store, version: i64, schema: &FactorSchema) -> Result<Arc<ActiveModel>, ServiceError> {
        let row = store
            .artifact(version)?
            .ok_or_else(|| ServiceError::NotFound(format!("model version {version}")))?;
        let m = Arc::new(self.load(&row, schema)?);
        store.set_active(version)?;
        *self.active.write().expect("registry lock") = Some(m.clone());
        Ok(m)
    }
}

/// Base corpus followed by feedback rows, with replication weights.
pub fn training_corpus(
    config: &ServiceConfig,
    schema: &FactorSchema,
    feedback: &[(StudentRecord, f64)],
) -> Result<(Vec<StudentRecord>, Vec<u32>), ServiceError> {
    let mut records = match &config.base_corpus {
        Some(p) => load_csv(p, schema).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };
    let mut weights = vec![1; records.len()];
    for (rec, cgpa) in feedback {
        let mut r = rec.clone();
        r.insert(TARGET, *cgpa);
        records.push(r);
        weights.push(config.feedback_weight);
    }
    Ok((records, weights))
}

/// Fits the configured pipeline on base corpus plus labelled feedback.
pub fn train(
    config: &ServiceConfig,
    schema: &FactorSchema,
    feedback: &[(StudentRecord, f64)],
) -> Result<Artifact, ServiceError> {
    let (records, weights) = training_corpus(config, schema, feedback)?;
    if records.len() < config.min_retrain_rows {
        return Err(ServiceError::InsufficientData {
            have: records.len(),
            need: config.min_retrain_rows,
        });
    }
    let spec = ModelSpec::from_name(&config.model, Some(Task::Regression))?;
    let mut tc = TrainConfig::new(spec, config.seed);
    tc.test_fraction = config.test_fraction;
    tc.cv_folds = config.cv_folds;
    if weights.iter().any(|w| *w != 1) {
        tc.row_weights = Some(weights);
    }
    Ok(train_pipeline(&records, schema, &tc)?)
}
