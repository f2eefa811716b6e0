//! Self-describing stage files.
//!
//! Every document is a JSON object holding its payload fields plus
//! `schema` (document kind), `version`, `id` (content hash of the payload)
//! and `parents` (ids of the documents it was derived from).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// First 16 hex digits of the SHA-256 of the value's compact JSON.
pub fn content_id<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable payload");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub schema: String,
    pub version: u32,
    pub id: String,
    #[serde(default)]
    pub parents: BTreeMap<String, String>,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize> Document<T> {
    pub fn new(schema: &str, body: T, parents: BTreeMap<String, String>) -> Self {
        Document { schema: schema.to_string(), version: SCHEMA_VERSION, id: content_id(&body), parents, body }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// Writes via a temporary sibling and rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let tmp = path.with_extension("tmp~");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable document");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_document<T: Serialize>(
    path: &Path,
    schema: &str,
    body: &T,
    parents: BTreeMap<String, String>,
) -> Result<String> {
    let doc = Document::new(schema, body, parents);
    write_json(path, &doc)?;
    Ok(doc.id)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema { path: path.display().to_string(), message: e.to_string() })
}

/// Reads a document and checks its schema tag and version. Plain payloads
/// without the envelope are accepted too.
pub fn read_document<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Document<T>> {
    let value: serde_json::Value = read_json(path)?;
    let bad = |message: String| Error::Schema { path: path.display().to_string(), message };
    match value.get("schema").and_then(|s| s.as_str()) {
        Some(s) if s != schema => Err(bad(format!("expected a {schema} document, found {s}"))),
        Some(_) => {
            let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
            if version != SCHEMA_VERSION as u64 {
                return Err(bad(format!("unsupported version {version}")));
            }
            serde_json::from_value(value).map_err(|e| bad(e.to_string()))
        }
        None => {
            let body: T = serde_json::from_value(value.clone()).map_err(|e| bad(e.to_string()))?;
            Ok(Document {
                schema: schema.to_string(),
                version: SCHEMA_VERSION,
                id: content_id(&value),
                parents: BTreeMap::new(),
                body,
            })
        }
    }
}
