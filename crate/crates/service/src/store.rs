use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS users (
    id TEXT PRIMARY KEY,
    email TEXT NOT NULL UNIQUE,
    credential_hash TEXT NOT NULL,
    is_admin INTEGER NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS artifacts (
    version INTEGER PRIMARY KEY,
    path TEXT NOT NULL,
    sha256 TEXT NOT NULL,
    created_at TEXT NOT NULL,
    active INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS predictions (
    id TEXT PRIMARY KEY,
    user_id TEXT NOT NULL REFERENCES users(id),
    input_json TEXT NOT NULL,
    model_output REAL NOT NULL,
    predicted_cgpa REAL NOT NULL,
    band TEXT NOT NULL,
    attribution_json TEXT NOT NULL,
    recommendations_json TEXT NOT NULL,
    model_version INTEGER NOT NULL REFERENCES artifacts(version),
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS feedback (
    id TEXT PRIMARY KEY,
    prediction_id TEXT NOT NULL REFERENCES predictions(id),
    user_id TEXT NOT NULL REFERENCES users(id),
    rating INTEGER NOT NULL CHECK (rating BETWEEN 1 AND 5),
    actual_cgpa REAL CHECK (actual_cgpa IS NULL OR actual_cgpa BETWEEN 0 AND 4),
    comment TEXT,
    created_at TEXT NOT NULL
);
";

#[derive(Debug, Clone, PartialEq)]
pub struct UserRow {
    pub id: String,
    pub email: String,
    pub credential_hash: String,
    pub is_admin: bool,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub user_id: String,
    pub input_json: String,
    pub model_output: f64,
    pub predicted_cgpa: f64,
    pub band: String,
    pub attribution_json: String,
    pub recommendations_json: String,
    pub model_version: i64,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRow {
    pub id: String,
    pub prediction_id: String,
    pub user_id: String,
    pub rating: i64,
    pub actual_cgpa: Option<f64>,
    pub comment: Option<String>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRow {
    pub version: i64,
    pub path: String,
    pub sha256: String,
    pub created_at: String,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackCounts {
    pub total: usize,
    pub with_actual_cgpa: usize,
}

/// SQLite persistence. Callers serialize access (one connection).
pub struct Store {
    conn: Connection,
}

impl Store {
    pub fn open(path: &str) -> Result<Self, ServiceError> {
        let conn = if path == ":memory:" {
            Connection::open_in_memory()?
        } else {
            Connection::open(path)?
        };
        conn.execute_batch("PRAGMA foreign_keys = ON;")?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { conn })
    }

    pub fn insert_user(&self, u: &UserRow) -> Result<(), ServiceError> {
        let r = self.conn.execute(
            "INSERT INTO users (id, email, credential_hash, is_admin, created_at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![u.id, u.email, u.credential_hash, u.is_admin, u.created_at],
        );
        match r {
            Err(rusqlite::Error::SqliteFailure(e, _)) if e.code == rusqlite::ErrorCode::ConstraintViolation => {
                Err(ServiceError::DuplicateEmail)
            }
            other => other.map(|_| ()).map_err(Into::into),
        }
    }

    pub fn user_by_email(&self, email: &str) -> Result<Option<UserRow>, ServiceError> {
        Ok(self
            .conn
            .query_row(
                "SELECT id, email, credential_hash, is_admin, created_at FROM users WHERE email = ?1",
                [email],
                |r| {
                    Ok(UserRow {
                        id: r.get(0)?,
                        email: r.get(1)?,
                        credential_hash: r.get(2)?,
                        is_admin: r.get(3)?,
                        created_at: r.get(4)?,
                    })
                },
            )
            .optional()?)
    }

    pub fn insert_prediction(&self, p: &PredictionRow) -> Result<(), ServiceError> {
        self.conn.execute(
            "INSERT INTO predictions (id, user_id, input_json, model_output, predicted_cgpa, band,
                attribution_json, recommendations_json, model_version, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)",
            params![
                p.id,
                p.user_id,
                p.input_json,
                p.model_output,
                p.predicted_cgpa,
                p.band,
                p.attribution_json,
                p.recommendations_json,
                p.model_version,
                p.created_at
            ],
        )?;
        Ok(())
    }

    pub fn prediction(&self, id: &str) -> Result<Option<PredictionRow>, ServiceError> {
        Ok(self
            .conn
            .query_row(
                "SELECT id, user_id, input_json, model_output, predicted_cgpa, band, attribution_json,
                        recommendations_json, model_version, created_at
                 FROM predictions WHERE id = ?1",
                [id],
                |r| {
                    Ok(PredictionRow {
                        id: r.get(0)?,
                        user_id: r.get(1)?,
                        input_json: r.get(2)?,
                        model_output: r.get(3)?,
                        predicted_cgpa: r.get(4)?,
                        band: r.get(5)?,
                        attribution_json: r.get(6)?,
                        recommendations_json: r.get(7)?,
                        model_version: r.get(8)?,
                        created_at: r.get(9)?,
                    })
                },
            )
            .optional()?)
    }

    pub fn insert_feedback(&self, f: &FeedbackRow) -> Result<(), ServiceError> {
        self.conn.execute(
            "INSERT INTO feedback (id, prediction_id, user_id, rating, actual_cgpa, comment, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![f.id, f.prediction_id, f.user_id, f.rating, f.actual_cgpa, f.comment, f.created_at],
        )?;
        Ok(())
    }

    pub fn feedback_counts(&self) -> Result<FeedbackCounts, ServiceError> {
        Ok(self.conn.query_row(
            "SELECT COUNT(*), COUNT(actual_cgpa) FROM feedback",
            [],
            |r| {
                Ok(FeedbackCounts {
                    total: r.get::<_, i64>(0)? as usize,
                    with_actual_cgpa: r.get::<_, i64>(1)? as usize,
                })
            },
        )?)
    }

    /// `(input_json, actual_cgpa)` for every feedback carrying a CGPA, in
    /// insertion order.
    pub fn labelled_feedback(&self) -> Result<Vec<(String, f64)>, ServiceError> {
        let mut st = self.conn.prepare(
            "SELECT p.input_json, f.actual_cgpa FROM feedback f JOIN predictions p ON p.id = f.prediction_id
             WHERE f.actual_cgpa IS NOT NULL ORDER BY f.rowid",
        )?;
        let rows = st.query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn insert_artifact(&self, a: &ArtifactRow) -> Result<(), ServiceError> {
        self.conn.execute(
            "INSERT INTO artifacts (version, path, sha256, created_at, active) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![a.version, a.path, a.sha256, a.created_at, a.active],
        )?;
        Ok(())
    }

    pub fn artifacts(&self) -> Result<Vec<ArtifactRow>, ServiceError> {
        let mut st = self
            .conn
            .prepare("SELECT version, path, sha256, created_at, active FROM artifacts ORDER BY version")?;
        let rows = st.query_map([], |r| {
            Ok(ArtifactRow {
                version: r.get(0)?,
                path: r.get(1)?,
                sha256: r.get(2)?,
                created_at: r.get(3)?,
                active: r.get(4)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    pub fn artifact(&self, version: i64) -> Result<Option<ArtifactRow>, ServiceError> {
        Ok(self.artifacts()?.into_iter().find(|a| a.version == version))
    }

    pub fn next_version(&self) -> Result<i64, ServiceError> {
        Ok(self
            .conn
            .query_row("SELECT COALESCE(MAX(version), 0) + 1 FROM artifacts", [], |r| r.get(0))?)
    }

    pub fn set_active(&mut self, version: i64) -> Result<(), ServiceError> {
        let tx = self.conn.transaction()?;
        tx.execute("UPDATE artifacts SET active = 0", [])?;
        let n = tx.execute("UPDATE artifacts SET active = 1 WHERE version = ?1", [version])?;
        if n != 1 {
            return Err(ServiceError::NotFound(format!("model version {version}")));
        }
        tx.commit()?;
        Ok(())
    }
}
