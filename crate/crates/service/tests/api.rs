use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use cgpa_core::data::{generate_synthetic, write_csv, FactorSchema, SemSpec, StudentRecord};
use cgpa_core::predictors::Artifact;
use cgpa_service::auth::TokenSigner;
use cgpa_service::{router, AppState, ServiceConfig};

const SECRET: &str = "test-secret-0123456789";
const ADMIN: &str = "admin@uni.edu";

struct Env {
    _dir: TempDir,
    state: Arc<AppState>,
    app: Router,
}

fn corpus(dir: &Path, n: usize) -> std::path::PathBuf {
    let schema = FactorSchema::builtin();
    let data = generate_synthetic(&SemSpec::fig3_default().with_seed(11), n).unwrap();
    let path = dir.join("base.csv");
    write_csv(std::fs::File::create(&path).unwrap(), &schema.acronyms(), &data.records).unwrap();
    path
}

fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        secret: SECRET.into(),
        store_path: dir.join("store.sqlite").to_string_lossy().into_owned(),
        artifact_dir: dir.join("artifacts"),
        base_corpus: Some(corpus(dir, 300)),
        admin_emails: vec![ADMIN.into()],
        ..ServiceConfig::default()
    }
}

fn env_with(f: impl FnOnce(&mut ServiceConfig)) -> Env {
    let dir = TempDir::new().unwrap();
    let mut cfg = config(dir.path());
    f(&mut cfg);
    let state = AppState::open(cfg).unwrap();
    Env {
        _dir: dir,
        app: router(state.clone()),
        state,
    }
}

fn env() -> Env {
    env_with(|_| {})
}

async fn call(app: &Router, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let body = match body {
        Some(b) => {
            req = req.header("content-type", "application/json");
            Body::from(b.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn user(app: &Router, email: &str) -> String {
    let cred = json!({"email": email, "credential": "long enough secret"});
    let (s, _) = call(app, "POST", "/api/register", None, Some(cred.clone())).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, v) = call(app, "POST", "/api/login", None, Some(cred)).await;
    assert_eq!(s, StatusCode::OK);
    v["token"].as_str().unwrap().to_string()
}

fn profile() -> Value {
    json!({
        "DI": "CSE", "YS": "3.0", "G": "Female", "SSC": 4.8, "HSC": 4.5, "FE": 12.0, "ME": 10.0,
        "FJ": "Teacher", "MJ": "Unemployed", "MI": "No", "AC": "50-75%", "SH": "0-3 hours",
        "IF": "Limited", "GS": "Never", "S": "No", "PI": "Yes", "HS": "Irregular", "PSR": "No",
        "C": "None", "RS": "Single", "CS": "Average", "SCI": "Not confident"
    })
}

fn efficiency_gap(p: &Value) -> f64 {
    let a = &p["attribution"];
    let sum: f64 = a["contributions"].as_array().unwrap().iter().map(|c| c["phi"].as_f64().unwrap()).sum();
    a["prediction"].as_f64().unwrap() - a["base_value"].as_f64().unwrap() - sum
}

#[tokio::test]
async fn register_login_predict_feedback_round_trip() {
    let e = env();
    let token = user(&e.app, "student@uni.edu").await;

    let (s, info) = call(&e.app, "GET", "/api/model/info", Some(&token), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(info["active_version"], 1);
    assert_eq!(info["feedback"]["total"], 0);

    let (s, p) = call(&e.app, "POST", "/api/predict", Some(&token), Some(profile())).await;
    assert_eq!(s, StatusCode::OK, "{p}");
    let cgpa = p["predicted_cgpa"].as_f64().unwrap();
    assert!((0.0..=4.0).contains(&cgpa));
    assert!((cgpa - (p["model_output"].as_f64().unwrap() * 4.0).clamp(0.0, 4.0)).abs() < 1e-12);
    assert!(efficiency_gap(&p).abs() < 1e-9);
    assert_eq!(p["attribution"]["method"]["kind"], "exact_linear");
    assert_eq!(p["attribution"]["contributions"].as_array().unwrap().len(), 22);
    let fj = p["attribution"]["contributions"].as_array().unwrap().iter().find(|c| c["feature"] == "FJ").unwrap();
    assert_eq!(fj["raw_value"], "Teacher");
    assert_eq!(p["model_version"], 1);
    for r in p["recommendations"].as_array().unwrap() {
        let f = r["feature"].as_str().unwrap();
        assert!(!cgpa_core::data::NON_ACTIONABLE.contains(&f), "{f}");
    }

    // The stored prediction reproduces from the versioned artifact.
    let id = p["prediction_id"].as_str().unwrap();
    let row = e.state.store.lock().unwrap().prediction(id).unwrap().unwrap();
    let art_row = e.state.store.lock().unwrap().artifact(row.model_version).unwrap().unwrap();
    let artifact = Artifact::load(Path::new(&art_row.path), Some(&art_row.sha256)).unwrap();
    let input: StudentRecord = serde_json::from_str(&row.input_json).unwrap();
    let replay = artifact.predict_record(&FactorSchema::builtin(), &input).unwrap();
    assert!((replay - row.model_output).abs() < 1e-9);
    assert_eq!(row.model_output, p["model_output"].as_f64().unwrap());

    let fb = json!({"prediction_id": id, "rating": 4, "actual_cgpa": 3.1, "comment": "close"});
    let (s, v) = call(&e.app, "POST", "/api/feedback", Some(&token), Some(fb)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert!(v["feedback_id"].is_string());
    let (_, info) = call(&e.app, "GET", "/api/model/info", Some(&token), None).await;
    assert_eq!(info["feedback"]["total"], 1);
    assert_eq!(info["feedback"]["with_actual_cgpa"], 1);
}

#[tokio::test]
async fn model_info_metrics_match_artifact_file() {
    let e = env();
    let token = user(&e.app, "a@uni.edu").await;
    let (_, info) = call(&e.app, "GET", "/api/model/info", Some(&token), None).await;
    let path = info["versions"][0]["path"].as_str().unwrap();
    let file: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(info["metrics"], file["training_metadata"]["metrics"]);
    assert_eq!(info["versions"][0]["active"], true);
}

#[tokio::test]
async fn schema_endpoint_serves_every_factor() {
    let e = env();
    let token = user(&e.app, "a@uni.edu").await;
    let (s, v) = call(&e.app, "GET", "/api/schema", Some(&token), None).await;
    assert_eq!(s, StatusCode::OK);
    let schema: FactorSchema = serde_json::from_value(v).unwrap();
    assert_eq!(schema, FactorSchema::builtin());
    assert_eq!(schema.feature_acronyms().len(), 22);
}

#[tokio::test]
async fn account_errors() {
    let e = env();
    user(&e.app, "dup@uni.edu").await;
    let (s, v) = call(&e.app, "POST", "/api/register", None, Some(json!({"email": "DUP@uni.edu", "password": "another one"}))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("DuplicateEmail")));

    let (s, v) = call(&e.app, "POST", "/api/register", None, Some(json!({"email": "nope", "credential": "short"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["fields"], json!(["email", "credential"]));

    let (s, v) = call(&e.app, "POST", "/api/login", None, Some(json!({"email": "dup@uni.edu", "credential": "wrong credential"}))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    assert_eq!(v["code"], "BadCredentials");
    assert!(v.get("token").is_none());
    let (s, _) = call(&e.app, "POST", "/api/login", None, Some(json!({"email": "ghost@uni.edu", "credential": "whatever123"}))).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn guard_rejects_missing_forged_and_expired_tokens_uniformly() {
    let e = env();
    let token = user(&e.app, "a@uni.edu").await;
    let mut forged = token.clone().into_bytes();
    let last = forged.len() - 1;
    forged[last] = if forged[last] == b'A' { b'B' } else { b'A' };
    let forged = String::from_utf8(forged).unwrap();
    let claims = TokenSigner::new(SECRET, 24).verify(&token, 0).unwrap();
    let expired = TokenSigner::new(SECRET, 1).issue(&claims.sub, false, chrono::Utc::now().timestamp() - 7200);

    let guarded = [
        ("POST", "/api/predict", Some(profile())),
        ("POST", "/api/feedback", Some(json!({"prediction_id": "nope", "rating": 3}))),
        ("GET", "/api/model/info", None),
        ("GET", "/api/schema", None),
        ("POST", "/api/admin/retrain", None),
        ("POST", "/api/admin/activate", Some(json!({"version": 1}))),
    ];
    for (m, path, body) in guarded {
        let (s, none) = call(&e.app, m, path, None, body.clone()).await;
        assert_eq!(s, StatusCode::UNAUTHORIZED, "{path}");
        assert_eq!(none, json!({"code": "TokenInvalid", "message": "token invalid"}), "{path}");
        let (s, v) = call(&e.app, m, path, Some(&forged), body.clone()).await;
        assert_eq!((s, &v), (StatusCode::UNAUTHORIZED, &none), "{path}");
        let (s, v) = call(&e.app, m, path, Some(&expired), body).await;
        assert_eq!(s, StatusCode::UNAUTHORIZED, "{path}");
        assert_eq!(v["code"], "TokenExpired");
    }
}

#[tokio::test]
async fn predict_validation_and_determinism() {
    let e = env();
    let token = user(&e.app, "a@uni.edu").await;
    let mut bad = profile();
    bad["FJ"] = json!("Astronaut");
    let (s, v) = call(&e.app, "POST", "/api/predict", Some(&token), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "ValidationFailed");
    assert_eq!(v["fields"], json!(["FJ"]));

    let mut missing = profile();
    missing.as_object_mut().unwrap().remove("SH");
    let (_, v) = call(&e.app, "POST", "/api/predict", Some(&token), Some(missing)).await;
    assert_eq!(v["fields"], json!(["SH"]));

    // CGPA in the input is ignored.
    let mut with_cgpa = profile();
    with_cgpa["CGPA"] = json!(1.0);
    let (_, a) = call(&e.app, "POST", "/api/predict", Some(&token), Some(profile())).await;
    let (_, b) = call(&e.app, "POST", "/api/predict", Some(&token), Some(with_cgpa)).await;
    assert_eq!(a["predicted_cgpa"], b["predicted_cgpa"]);
    assert_eq!(a["attribution"], b["attribution"]);
    assert_eq!(a["recommendations"], b["recommendations"]);
    assert_ne!(a["prediction_id"], b["prediction_id"]);
    assert!(b["input"].get("CGPA").is_none());
}

#[tokio::test]
async fn sampled_attribution_for_tree_models() {
    let e = env_with(|c| {
        c.model = "tree".into();
        c.shapley_samples = 200;
    });
    let token = user(&e.app, "a@uni.edu").await;
    let (s, p) = call(&e.app, "POST", "/api/predict", Some(&token), Some(profile())).await;
    assert_eq!(s, StatusCode::OK, "{p}");
    assert_eq!(p["attribution"]["method"]["kind"], "sampled");
    assert!(efficiency_gap(&p).abs() < 1e-9);
    let (_, q) = call(&e.app, "POST", "/api/predict", Some(&token), Some(profile())).await;
    assert_eq!(p["attribution"], q["attribution"]);
}

#[tokio::test]
async fn feedback_errors() {
    let e = env();
    let alice = user(&e.app, "alice@uni.edu").await;
    let bob = user(&e.app, "bob@uni.edu").await;
    let (_, p) = call(&e.app, "POST", "/api/predict", Some(&alice), Some(profile())).await;
    let id = p["prediction_id"].as_str().unwrap();

    let (s, v) = call(&e.app, "POST", "/api/feedback", Some(&bob), Some(json!({"prediction_id": id, "rating": 3}))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::FORBIDDEN, Some("Forbidden")));
    for rating in [json!(6), json!(0), json!(2.5), json!("5")] {
        let (s, v) = call(&e.app, "POST", "/api/feedback", Some(&alice), Some(json!({"prediction_id": id, "rating": rating}))).await;
        assert_eq!((s, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("BadRating")), "{rating}");
    }
    let (s, v) = call(&e.app, "POST", "/api/feedback", Some(&alice), Some(json!({"prediction_id": id, "rating": 3, "actual_cgpa": 4.2}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["fields"], json!(["actual_cgpa"]));
    let (s, _) = call(&e.app, "POST", "/api/feedback", Some(&alice), Some(json!({"prediction_id": "missing", "rating": 3}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (_, info) = call(&e.app, "GET", "/api/model/info", Some(&alice), None).await;
    assert_eq!(info["feedback"]["total"], 0);
}

#[tokio::test]
async fn retrain_without_feedback_reproduces_metrics() {
    let e = env();
    let student = user(&e.app, "s@uni.edu").await;
    let admin = user(&e.app, ADMIN).await;
    let (s, _) = call(&e.app, "POST", "/api/admin/retrain", Some(&student), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN);

    let (s, r) = call(&e.app, "POST", "/api/admin/retrain", Some(&admin), None).await;
    assert_eq!(s, StatusCode::CREATED, "{r}");
    assert_eq!(r["version"], 2);
    assert_eq!(r["feedback_rows"], 0);
    let (_, info) = call(&e.app, "GET", "/api/model/info", Some(&admin), None).await;
    assert_eq!(info["active_version"], 1, "retrain must not activate");
    let old = &info["metrics"]["regression"];
    let new = &r["metrics"]["regression"];
    for k in ["mae", "mse", "rmse", "r2", "cv_mean"] {
        assert!((old[k].as_f64().unwrap() - new[k].as_f64().unwrap()).abs() < 1e-9, "{k}");
    }
    assert_eq!(info["versions"].as_array().unwrap().len(), 2);

    let (s, v) = call(&e.app, "POST", "/api/admin/activate", Some(&admin), Some(json!({"version": 2}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (_, info) = call(&e.app, "GET", "/api/model/info", Some(&admin), None).await;
    assert_eq!(info["active_version"], 2);
    assert!(Path::new(info["versions"][0]["path"].as_str().unwrap()).exists(), "old artifacts retained");
}

#[tokio::test]
async fn activation_errors() {
    let e = env();
    let admin = user(&e.app, ADMIN).await;
    let student = user(&e.app, "s@uni.edu").await;
    let (s, _) = call(&e.app, "POST", "/api/admin/activate", Some(&student), Some(json!({"version": 1}))).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let (s, v) = call(&e.app, "POST", "/api/admin/activate", Some(&admin), Some(json!({"version": 9}))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("NotFound")));

    let (_, r) = call(&e.app, "POST", "/api/admin/retrain", Some(&admin), None).await;
    let path = e.state.store.lock().unwrap().artifact(2).unwrap().unwrap().path;
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push(' ');
    std::fs::write(&path, text).unwrap();
    let (s, v) = call(&e.app, "POST", "/api/admin/activate", Some(&admin), Some(json!({"version": r["version"]}))).await;
    assert_eq!(v["code"], "ArtifactCorrupt", "{s} {v}");
    let (_, info) = call(&e.app, "GET", "/api/model/info", Some(&admin), None).await;
    assert_eq!(info["active_version"], 1);
}

#[tokio::test]
async fn insufficient_data() {
    let e = env_with(|c| c.min_retrain_rows = 301);
    // Version 1 could not be trained either.
    let admin = user(&e.app, ADMIN).await;
    let (_, info) = call(&e.app, "GET", "/api/model/info", Some(&admin), None).await;
    assert_eq!(info["active_version"], Value::Null);
    let (s, v) = call(&e.app, "POST", "/api/predict", Some(&admin), Some(profile())).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::SERVICE_UNAVAILABLE, Some("ModelUnavailable")));
    let (s, v) = call(&e.app, "POST", "/api/admin/retrain", Some(&admin), None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("InsufficientData")), "{v}");
}

#[tokio::test]
async fn restart_restores_active_version() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path());
    {
        let state = AppState::open(cfg.clone()).unwrap();
        let app = router(state);
        let admin = user(&app, ADMIN).await;
        call(&app, "POST", "/api/admin/retrain", Some(&admin), None).await;
        call(&app, "POST", "/api/admin/activate", Some(&admin), Some(json!({"version": 2}))).await;
    }
    let state = AppState::open(cfg).unwrap();
    assert_eq!(state.registry.current().unwrap().version, 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn activation_under_load_never_mixes_versions() {
    let e = env_with(|c| c.feedback_weight = 40);
    let admin = user(&e.app, ADMIN).await;
    let token = user(&e.app, "s@uni.edu").await;

    // Skewed feedback so version 2 differs visibly from version 1.
    for _ in 0..5 {
        let (_, p) = call(&e.app, "POST", "/api/predict", Some(&token), Some(profile())).await;
        let fb = json!({"prediction_id": p["prediction_id"], "rating": 1, "actual_cgpa": 0.5});
        call(&e.app, "POST", "/api/feedback", Some(&token), Some(fb)).await;
    }
    let (s, r) = call(&e.app, "POST", "/api/admin/retrain", Some(&admin), None).await;
    assert_eq!(s, StatusCode::CREATED, "{r}");
    assert_eq!(r["feedback_rows"], 5);

    let schema = FactorSchema::builtin();
    let input: StudentRecord = serde_json::from_value(profile()).unwrap();
    let expected: Vec<f64> = (1..=2)
        .map(|v| {
            let row = e.state.store.lock().unwrap().artifact(v).unwrap().unwrap();
            Artifact::load(Path::new(&row.path), Some(&row.sha256)).unwrap().predict_record(&schema, &input).unwrap()
        })
        .collect();
    assert!((expected[0] - expected[1]).abs() > 1e-3, "{expected:?}");

    let check = |p: &Value| {
        let v = p["model_version"].as_i64().unwrap();
        assert!(v == 1 || v == 2, "{p}");
        let out = p["model_output"].as_f64().unwrap();
        assert_eq!(out, expected[v as usize - 1], "version {v} with another version's output");
        assert_eq!(p["attribution"]["prediction"].as_f64().unwrap(), out);
        assert!(efficiency_gap(p).abs() < 1e-9);
        v
    };

    let mut handles = Vec::new();
    for i in 0..120 {
        let app = e.app.clone();
        let token = token.clone();
        let admin = admin.clone();
        handles.push(tokio::spawn(async move {
            if i == 60 {
                let (s, v) = call(&app, "POST", "/api/admin/activate", Some(&admin), Some(json!({"version": 2}))).await;
                assert_eq!(s, StatusCode::OK, "{v}");
                None
            } else {
                let (s, p) = call(&app, "POST", "/api/predict", Some(&token), Some(profile())).await;
                assert_eq!(s, StatusCode::OK, "{p}");
                Some(p)
            }
        }));
    }
    let mut seen = [0usize; 2];
    for h in handles {
        if let Some(p) = h.await.unwrap() {
            seen[check(&p) as usize - 1] += 1;
        }
    }
    assert_eq!(seen[0] + seen[1], 119);

    for _ in 0..10 {
        let (_, p) = call(&e.app, "POST", "/api/predict", Some(&token), Some(profile())).await;
        assert_eq!(check(&p), 2);
    }
}
