use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cgpa_core::data::{FactorSchema, RawValue, StudentRecord, TARGET};
use cgpa_core::explain::{actionable_features, artifact_attribution, recommend, Attribution, Recommendation};
use cgpa_core::predictors::{bin_cgpa, MetricsReport, ModelSpec, TrainingMetadata};

use crate::auth::{hash_credential, valid_email, verify_credential, Claims};
use crate::registry::{self, ActiveModel};
use crate::store::{ArtifactRow, FeedbackCounts, FeedbackRow, PredictionRow, UserRow};
use crate::{AppState, ServiceError};

type AppResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub email: String,
    #[serde(alias = "password")]
    pub credential: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub user_id: String,
}

pub type LoginRequest = RegisterRequest;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub user_id: String,
    pub admin: bool,
    pub expires_at: i64,
}

/// A stored prediction. `attribution` and recommendation predictions are
/// on the model output scale (CGPA / 4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub prediction_id: String,
    pub user_id: String,
    pub input: StudentRecord,
    pub model_output: f64,
    pub predicted_cgpa: f64,
    pub band: String,
    pub attribution: Attribution,
    pub recommendations: Vec<Recommendation>,
    pub model_version: i64,
    pub created_at: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub prediction_id: String,
    /// Kept loose so non-integers are reported as `BadRating`.
    pub rating: serde_json::Value,
    #[serde(default)]
    pub actual_cgpa: Option<f64>,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub feedback_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInfo {
    pub active_version: Option<i64>,
    pub sha256: Option<String>,
    pub model_kind: Option<ModelSpec>,
    pub training_metadata: Option<TrainingMetadata>,
    pub metrics: Option<MetricsReport>,
    pub feedback: FeedbackCounts,
    pub versions: Vec<ArtifactRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrainResponse {
    pub version: i64,
    pub sha256: String,
    pub metrics: MetricsReport,
    pub feedback_rows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivateRequest {
    pub version: i64,
}

fn now_ts() -> i64 {
    chrono::Utc::now().timestamp()
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::ValidationFailed(vec![format!("body: {e}")]))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> AppResult<T> + Send + 'static) -> AppResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Store(format!("worker: {e}")))?
}

/// Bearer-token guard.
pub struct AuthUser(pub Claims);

impl FromRequestParts<Arc<AppState>> for AuthUser {
    type Rejection = ServiceError;

    async fn from_request_parts(parts: &mut Parts, state: &Arc<AppState>) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ServiceError::TokenInvalid)?;
        Ok(AuthUser(state.signer.verify(token.trim(), now_ts())?))
    }
}

async fn register(State(st): State<Arc<AppState>>, body: Bytes) -> AppResult<(StatusCode, Json<RegisterResponse>)> {
    let req: RegisterRequest = parse(&body)?;
    let email = req.email.trim().to_lowercase();
    let mut bad = Vec::new();
    if !valid_email(&email) {
        bad.push("email".to_string());
    }
    if req.credential.chars().count() < 8 {
        bad.push("credential".to_string());
    }
    if !bad.is_empty() {
        return Err(ServiceError::ValidationFailed(bad));
    }
    let admin = st.config.admin_emails.iter().any(|a| a.trim().eq_ignore_ascii_case(&email));
    let user_id = blocking(move || {
        let user = UserRow {
            id: uuid::Uuid::new_v4().to_string(),
            email,
            credential_hash: hash_credential(&req.credential)?,
            is_admin: admin,
            created_at: now_rfc3339(),
        };
        st.store().insert_user(&user)?;
        Ok(user.id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(RegisterResponse { user_id })))
}

async fn login(State(st): State<Arc<AppState>>, body: Bytes) -> AppResult<Json<LoginResponse>> {
    let req: LoginRequest = parse(&body)?;
    let email = req.email.trim().to_lowercase();
    let user = {
        let store = st.store();
        store.user_by_email(&email)?
    };
    let Some(user) = user else {
        return Err(ServiceError::BadCredentials);
    };
    let hash = user.credential_hash.clone();
    let ok = blocking(move || Ok(verify_credential(&req.credential, &hash))).await?;
    if !ok {
        return Err(ServiceError::BadCredentials);
    }
    let now = now_ts();
    let token = st.signer.issue(&user.id, user.is_admin, now);
    let expires_at = st.signer.verify(&token, now)?.exp;
    Ok(Json(LoginResponse {
        token,
        user_id: user.id,
        admin: user.is_admin,
        expires_at,
    }))
}

/// Prediction, attribution and recommendations from one model snapshot.
pub(crate) fn predict_with(
    model: &ActiveModel,
    schema: &FactorSchema,
    input: &StudentRecord,
    shapley_samples: usize,
    seed: u64,
    n_recommendations: usize,
) -> AppResult<(f64, Attribution, Vec<Recommendation>)> {
    let a = &model.artifact;
    let enc = a.encode(schema, input)?;
    let out = a.predict_scaled(&enc.scaled);
    let attr = artifact_attribution(a, &enc.scaled, shapley_samples, seed)
        .map_err(|e| ServiceError::Model(e.to_string()))?;
    let raw: Vec<RawValue> = a
        .feature_names
        .iter()
        .map(|f| input.get(f).cloned().unwrap_or(RawValue::Number(f64::NAN)))
        .collect();
    let attr = attr.with_raw_values(raw);
    let f = |z: &[f64]| a.predict_scaled(z);
    let recs = recommend(&attr, &f, &enc.scaled, &model.domains, &actionable_features(schema), n_recommendations);
    Ok((out, attr, recs))
}

async fn predict(State(st): State<Arc<AppState>>, AuthUser(claims): AuthUser, body: Bytes) -> AppResult<Json<PredictionRecord>> {
    let mut input: StudentRecord = parse(&body)?;
    let model = st.registry.current().ok_or(ServiceError::ModelUnavailable)?;
    let record = blocking(move || {
        input.values.retain(|k, _| k != TARGET && st.schema.get(k).is_some());
        let cfg = &st.config;
        let (out, attribution, recommendations) =
            predict_with(&model, &st.schema, &input, cfg.shapley_samples, cfg.seed, cfg.n_recommendations)?;
        let predicted_cgpa = model.artifact.cgpa_from_output(out);
        let rec = PredictionRecord {
            prediction_id: uuid::Uuid::new_v4().to_string(),
            user_id: claims.sub,
            input,
            model_output: out,
            predicted_cgpa,
            band: bin_cgpa(predicted_cgpa)?.label().to_string(),
            attribution,
            recommendations,
            model_version: model.version,
            created_at: now_rfc3339(),
        };
        st.store().insert_prediction(&PredictionRow {
            id: rec.prediction_id.clone(),
            user_id: rec.user_id.clone(),
            input_json: to_json(&rec.input),
            model_output: rec.model_output,
            predicted_cgpa: rec.predicted_cgpa,
            band: rec.band.clone(),
            attribution_json: to_json(&rec.attribution),
            recommendations_json: to_json(&rec.recommendations),
            model_version: rec.model_version,
            created_at: rec.created_at.clone(),
        })?;
        Ok(rec)
    })
    .await?;
    Ok(Json(record))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

async fn feedback(
    State(st): State<Arc<AppState>>,
    AuthUser(claims): AuthUser,
    body: Bytes,
) -> AppResult<(StatusCode, Json<FeedbackResponse>)> {
    let req: FeedbackRequest = parse(&body)?;
    let rating = req
        .rating
        .as_i64()
        .filter(|r| (1..=5).contains(r))
        .ok_or(ServiceError::BadRating)?;
    if let Some(c) = req.actual_cgpa {
        if !(0.0..=4.0).contains(&c) {
            return Err(ServiceError::ValidationFailed(vec!["actual_cgpa".into()]));
        }
    }
    let store = st.store();
    let pred = store
        .prediction(&req.prediction_id)?
        .ok_or_else(|| ServiceError::NotFound(format!("prediction {}", req.prediction_id)))?;
    if pred.user_id != claims.sub {
        return Err(ServiceError::Forbidden);
    }
    let row = FeedbackRow {
        id: uuid::Uuid::new_v4().to_string(),
        prediction_id: pred.id,
        user_id: claims.sub,
        rating,
        actual_cgpa: req.actual_cgpa,
        comment: req.comment,
        created_at: now_rfc3339(),
    };
    store.insert_feedback(&row)?;
    Ok((StatusCode::CREATED, Json(FeedbackResponse { feedback_id: row.id })))
}

async fn model_info(State(st): State<Arc<AppState>>, AuthUser(_): AuthUser) -> AppResult<Json<ModelInfo>> {
    let model = st.registry.current();
    let (feedback, versions) = {
        let store = st.store();
        (store.feedback_counts()?, store.artifacts()?)
    };
    Ok(Json(ModelInfo {
        active_version: model.as_ref().map(|m| m.version),
        sha256: model.as_ref().map(|m| m.sha256.clone()),
        model_kind: model.as_ref().map(|m| m.artifact.model_kind),
        training_metadata: model.as_ref().map(|m| m.artifact.training_metadata.clone()),
        metrics: model.as_ref().map(|m| m.artifact.training_metadata.metrics.clone()),
        feedback,
        versions,
    }))
}

async fn schema(State(st): State<Arc<AppState>>, AuthUser(_): AuthUser) -> Json<FactorSchema> {
    Json(st.schema.clone())
}

fn require_admin(claims: &Claims) -> AppResult<()> {
    if claims.admin {
        Ok(())
    } else {
        Err(ServiceError::Forbidden)
    }
}

async fn retrain(State(st): State<Arc<AppState>>, AuthUser(claims): AuthUser) -> AppResult<(StatusCode, Json<RetrainResponse>)> {
    require_admin(&claims)?;
    let resp = blocking(move || {
        let _guard = st.retrain.lock().unwrap_or_else(|p| p.into_inner());
        let labelled = st.store().labelled_feedback()?;
        let feedback = labelled
            .into_iter()
            .map(|(input, cgpa)| {
                serde_json::from_str::<StudentRecord>(&input)
                    .map(|r| (r, cgpa))
                    .map_err(|e| ServiceError::Store(e.to_string()))
            })
            .collect::<AppResult<Vec<_>>>()?;
        let artifact = registry::train(&st.config, &st.schema, &feedback)?;
        let row = st.registry.publish(&st.store(), &artifact)?;
        tracing::info!(version = row.version, feedback_rows = feedback.len(), "retrained");
        Ok(RetrainResponse {
            version: row.version,
            sha256: row.sha256,
            metrics: artifact.training_metadata.metrics,
            feedback_rows: feedback.len(),
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(resp)))
}

async fn activate(State(st): State<Arc<AppState>>, AuthUser(claims): AuthUser, body: Bytes) -> AppResult<Json<serde_json::Value>> {
    require_admin(&claims)?;
    let req: ActivateRequest = parse(&body)?;
    let m = blocking(move || {
        let mut store = st.store();
        st.registry.activate(&mut store, req.version, &st.schema)
    })
    .await?;
    tracing::info!(version = m.version, "activated");
    Ok(Json(serde_json::json!({ "active_version": m.version, "sha256": m.sha256 })))
}

async fn not_found() -> ServiceError {
    ServiceError::NotFound("route".into())
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        %method,
        %path,
        status = resp.status().as_u16(),
        latency_ms = start.elapsed().as_secs_f64() * 1e3,
        "request"
    );
    resp
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/register", post(register))
        .route("/api/login", post(login))
        .route("/api/predict", post(predict))
        .route("/api/feedback", post(feedback))
        .route("/api/model/info", get(model_info))
        .route("/api/schema", get(schema))
        .route("/api/admin/retrain", post(retrain))
        .route("/api/admin/activate", post(activate))
        .fallback(not_found)
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}
