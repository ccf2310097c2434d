//! Salted SHA-256 de-identification and known-key retrieval.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use base64::Engine;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::record::{FieldValue, IntegratedDatabase, Register, RegisterRecord, PERSON_FIELDS, PID};

pub const MIN_SALT_LEN: usize = 16;

/// Secret prepended to every hashed value. Never printed or serialized.
#[derive(Clone, PartialEq, Eq)]
pub struct Salt(Vec<u8>);

impl Salt {
    pub fn new(secret: impl Into<Vec<u8>>) -> Result<Self> {
        let secret = secret.into();
        if secret.len() < MIN_SALT_LEN {
            return Err(Error::config(format!(
                "salt must be at least {MIN_SALT_LEN} bytes, got {}",
                secret.len()
            )));
        }
        Ok(Salt(secret))
    }

    /// Skips the length check. Only for reproducing published test vectors.
    pub fn insecure(secret: impl Into<Vec<u8>>) -> Self {
        Salt(secret.into())
    }

    /// Raw salt bytes from a key file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Salt::new(bytes)
    }

    /// Base64-encoded salt held in environment variable `var`.
    pub fn from_env(var: &str) -> Result<Self> {
        let encoded = std::env::var(var)
            .map_err(|_| Error::config(format!("salt environment variable {var} is not set")))?;
        Salt::from_base64(&encoded)
    }

    pub fn from_base64(encoded: &str) -> Result<Self> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(encoded.trim())
            .map_err(|_| Error::config("salt is not valid base64"))?;
        Salt::new(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Digest of the salt itself, usable as a cache key without revealing it.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"regcensus-salt-fingerprint:");
        h.update(&self.0);
        hex::encode(h.finalize())
    }
}

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Salt(<{} bytes redacted>)", self.0.len())
    }
}

/// SHA-256 over `salt || value` as 64 lowercase hex characters.
pub fn digest(value: &str, salt: &Salt) -> String {
    let mut h = Sha256::new();
    h.update(&salt.0);
    h.update(value.as_bytes());
    hex::encode(h.finalize())
}

/// Hashes a present value; N/A is a domain error.
pub fn hash_value(value: &FieldValue, salt: &Salt) -> Result<String> {
    match value {
        FieldValue::Present(v) => Ok(digest(v, salt)),
        FieldValue::NotAvailable => Err(Error::domain("cannot hash an N/A value")),
    }
}

/// Fields to replace by their digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeidentPolicy {
    fields: BTreeSet<String>,
}

impl Default for DeidentPolicy {
    fn default() -> Self {
        DeidentPolicy {
            fields: BTreeSet::from([PID.to_string()]),
        }
    }
}

impl DeidentPolicy {
    pub fn new<I, S>(fields: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let fields: BTreeSet<String> = fields.into_iter().map(Into::into).collect();
        if fields.is_empty() {
            return Err(Error::config("de-identification policy names no fields"));
        }
        Ok(DeidentPolicy { fields })
    }

    pub fn fields(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(String::as_str)
    }

    /// Hashes the policy fields of one record in place.
    pub fn apply(&self, record: &mut RegisterRecord, salt: &Salt) {
        for field in &self.fields {
            if let Some(slot) = record.get_mut(field) {
                if let FieldValue::Present(v) = slot {
                    *slot = FieldValue::Present(digest(v, salt));
                }
            }
        }
    }
}

/// Replaces every present value of each policy field by its digest.
pub fn deidentify(mut register: Register, policy: &DeidentPolicy, salt: &Salt) -> Result<Register> {
    let known = register.extra_fields();
    if let Some(missing) = policy
        .fields()
        .find(|f| !PERSON_FIELDS.contains(f) && !known.contains(*f))
    {
        return Err(Error::config(format!(
            "de-identification field {missing:?} not in register {}",
            register.register_id
        )));
    }
    register
        .records
        .par_iter_mut()
        .for_each(|record| policy.apply(record, salt));
    Ok(register)
}

/// Anything holding records addressable by (de-identified) PID.
pub trait PidLookup {
    fn records_with_pid<'a>(&'a self, digest: &str) -> Vec<&'a RegisterRecord>;
}

impl PidLookup for Register {
    fn records_with_pid<'a>(&'a self, digest: &str) -> Vec<&'a RegisterRecord> {
        self.records
            .iter()
            .filter(|r| r.pid.as_str() == Some(digest))
            .collect()
    }
}

impl PidLookup for IntegratedDatabase {
    fn records_with_pid<'a>(&'a self, digest: &str) -> Vec<&'a RegisterRecord> {
        self.rows
            .values()
            .filter(|r| r.pid.as_str() == Some(digest))
            .collect()
    }
}

/// Known-key retrieval: hashes `original_id` with `salt` and returns the
/// matching records (possibly none).
pub fn retrieve<'a, D: PidLookup + ?Sized>(
    encrypted: &'a D,
    original_id: &str,
    salt: &Salt,
) -> Vec<&'a RegisterRecord> {
    encrypted.records_with_pid(&digest(original_id, salt))
}
