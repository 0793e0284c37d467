//! Content-addressed off-chain store.
//!
//! Objects are serialized to canonical JSON (UTF-8, keys sorted
//! lexicographically by byte, shortest round-trip floats, no whitespace) and
//! keyed by the SHA-256 digest of those bytes. The store lives in memory and
//! can mirror every object to `<root>/<hex-cid>.json`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::RwLock;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ModelId;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no object stored under {0}")]
    NotFound(Cid),
    #[error("stored object {cid} does not decode: {source}")]
    Decode {
        cid: Cid,
        #[source]
        source: serde_json::Error,
    },
    #[error("persisted object {0} does not hash to its file name")]
    Corrupt(Cid),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// 32-byte content identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cid(pub [u8; 32]);

impl Cid {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        Cid(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({})", &self.to_hex()[..12])
    }
}

impl FromStr for Cid {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = hex::decode(s)
            .map_err(|e| StoreError::InvalidInput(format!("bad CID {s:?}: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| StoreError::InvalidInput(format!("CID {s:?} is not 32 bytes")))?;
        Ok(Cid(arr))
    }
}

impl Serialize for Cid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Off-chain description of a shared model; its CID is the model's `CID_llm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDetails {
    pub name: String,
    pub version: String,
    pub description: String,
    pub endpoint: String,
    pub context_tags: Vec<String>,
}

impl ModelDetails {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            version: "1".to_string(),
            description: String::new(),
            endpoint: format!("replay://{name}"),
            context_tags: Vec::new(),
        }
    }
}

/// A reference answer used in one automatic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceAnswer {
    pub model_id: ModelId,
    pub answer: String,
}

/// Everything needed to re-derive one automatic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub prompt: String,
    pub context: String,
    pub target_model: ModelId,
    pub target_answer: String,
    pub references: Vec<ReferenceAnswer>,
    pub pair_scores: Vec<f64>,
    /// Weighted reputations of the references when they were selected.
    pub reference_reputations: Vec<f64>,
    pub s_a: f64,
    pub w_a: f64,
    pub logical_time: u64,
}

impl EvaluationRecord {
    pub fn validate(&self) -> Result<(), StoreError> {
        let k = self.references.len();
        if k == 0 || self.pair_scores.len() != k || self.reference_reputations.len() != k {
            return Err(StoreError::InvalidInput(format!(
                "record has {} references, {} pair scores, {} reputations",
                k,
                self.pair_scores.len(),
                self.reference_reputations.len()
            )));
        }
        let scores = self.pair_scores.iter().chain(&self.reference_reputations);
        for &v in scores.chain([&self.s_a, &self.w_a]) {
            if !(0.0..=1.0).contains(&v) {
                return Err(StoreError::InvalidInput(format!(
                    "record value {v} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push('{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// Canonical JSON bytes of any serializable value.
pub fn canonical_json<T: Serialize + ?Sized>(object: &T) -> Result<Vec<u8>, StoreError> {
    let value = serde_json::to_value(object)
        .map_err(|e| StoreError::InvalidInput(format!("not serializable: {e}")))?;
    let mut out = String::new();
    write_canonical(&value, &mut out);
    Ok(out.into_bytes())
}

pub fn cid_of<T: Serialize + ?Sized>(object: &T) -> Result<Cid, StoreError> {
    Ok(Cid::of_bytes(&canonical_json(object)?))
}

#[derive(Debug, Default)]
pub struct OffchainStore {
    objects: RwLock<HashMap<Cid, Vec<u8>>>,
    root: Option<PathBuf>,
}

impl OffchainStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a directory-backed store, loading every `<hex-cid>.json` found.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let io = |path: &Path, source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::create_dir_all(&root).map_err(|e| io(&root, e))?;
        let mut objects = HashMap::new();
        for entry in fs::read_dir(&root).map_err(|e| io(&root, e))? {
            let path = entry.map_err(|e| io(&root, e))?.path();
            let Some(stem) = path
                .file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_suffix(".json"))
            else {
                continue;
            };
            let Ok(cid) = stem.parse::<Cid>() else {
                continue;
            };
            let bytes = fs::read(&path).map_err(|e| io(&path, e))?;
            if Cid::of_bytes(&bytes) != cid {
                return Err(StoreError::Corrupt(cid));
            }
            objects.insert(cid, bytes);
        }
        Ok(Self {
            objects: RwLock::new(objects),
            root: Some(root),
        })
    }

    pub fn put<T: Serialize + ?Sized>(&self, object: &T) -> Result<Cid, StoreError> {
        let bytes = canonical_json(object)?;
        let cid = Cid::of_bytes(&bytes);
        let mut objects = self.objects.write().expect("store lock poisoned");
        if objects.contains_key(&cid) {
            return Ok(cid);
        }
        if let Some(root) = &self.root {
            let path = root.join(format!("{cid}.json"));
            fs::write(&path, &bytes).map_err(|source| StoreError::Io { path, source })?;
        }
        objects.insert(cid, bytes);
        Ok(cid)
    }

    /// Validates and stores an evaluation record.
    pub fn put_record(&self, record: &EvaluationRecord) -> Result<Cid, StoreError> {
        record.validate()?;
        self.put(record)
    }

    pub fn get_bytes(&self, cid: &Cid) -> Result<Vec<u8>, StoreError> {
        self.objects
            .read()
            .expect("store lock poisoned")
            .get(cid)
            .cloned()
            .ok_or(StoreError::NotFound(*cid))
    }

    pub fn get<T: DeserializeOwned>(&self, cid: &Cid) -> Result<T, StoreError> {
        let bytes = self.get_bytes(cid)?;
        serde_json::from_slice(&bytes).map_err(|source| StoreError::Decode { cid: *cid, source })
    }

    pub fn contains(&self, cid: &Cid) -> bool {
        self.objects
            .read()
            .expect("store lock poisoned")
            .contains_key(cid)
    }

    pub fn len(&self) -> usize {
        self.objects.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
