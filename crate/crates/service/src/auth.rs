use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::ServiceError;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claims {
    pub sub: String,
    pub admin: bool,
    /// Expiry, seconds since the Unix epoch.
    pub exp: i64,
}

/// Signs and checks `base64url(claims).base64url(hmac)` tokens.
#[derive(Clone)]
pub struct TokenSigner {
    key: Vec<u8>,
    ttl_secs: i64,
}

impl TokenSigner {
    pub fn new(secret: &str, ttl_hours: i64) -> Self {
        Self {
            key: secret.as_bytes().to_vec(),
            ttl_secs: ttl_hours * 3600,
        }
    }

    fn mac(&self, payload: &str) -> HmacSha256 {
        let mut m = HmacSha256::new_from_slice(&self.key).expect("hmac accepts any key length");
        m.update(payload.as_bytes());
        m
    }

    pub fn issue(&self, user_id: &str, admin: bool, now: i64) -> String {
        let claims = Claims {
            sub: user_id.into(),
            admin,
            exp: now + self.ttl_secs,
        };
        let payload = URL_SAFE_NO_PAD.encode(serde_json::to_vec(&claims).expect("claims serialize"));
        let sig = URL_SAFE_NO_PAD.encode(self.mac(&payload).finalize().into_bytes());
        format!("{payload}.{sig}")
    }

    pub fn verify(&self, token: &str, now: i64) -> Result<Claims, ServiceError> {
        let (payload, sig) = token.split_once('.').ok_or(ServiceError::TokenInvalid)?;
        let sig = URL_SAFE_NO_PAD.decode(sig).map_err(|_| ServiceError::TokenInvalid)?;
        self.mac(payload).verify_slice(&sig).map_err(|_| ServiceError::TokenInvalid)?;
        let bytes = URL_SAFE_NO_PAD.decode(payload).map_err(|_| ServiceError::TokenInvalid)?;
        let claims: Claims = serde_json::from_slice(&bytes).map_err(|_| ServiceError::TokenInvalid)?;
        if claims.exp <= now {
            return Err(ServiceError::TokenExpired);
        }
        Ok(claims)
    }
}

pub fn hash_credential(credential: &str) -> Result<String, ServiceError> {
    let mut bytes = [0u8; 16];
    rand::rng().fill(&mut bytes);
    let salt = SaltString::encode_b64(&bytes).map_err(|e| ServiceError::Store(e.to_string()))?;
    Argon2::default()
        .hash_password(credential.as_bytes(), &salt)
        .map(|h| h.to_string())
        .map_err(|e| ServiceError::Store(e.to_string()))
}

pub fn verify_credential(credential: &str, hash: &str) -> bool {
    PasswordHash::new(hash)
        .map(|h| Argon2::default().verify_password(credential.as_bytes(), &h).is_ok())
        .unwrap_or(false)
}

/// Loose syntactic check: `local@domain.tld`, no whitespace.
pub fn valid_email(email: &str) -> bool {
    let Some((local, domain)) = email.split_once('@') else {
        return false;
    };
    !local.is_empty()
        && !domain.contains('@')
        && !email.chars().any(char::is_whitespace)
        && domain.split('.').count() >= 2
        && domain.split('.').all(|p| !p.is_empty())
}
