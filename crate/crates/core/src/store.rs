//! Content-addressed object store.
//!
//! Objects are named by the SHA-256 of their raw bytes and re-verified on
//! every read. The store is append-only for the lifetime of a run.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::crypto::sha256;

/// Environment variable that switches the CLI to a file-backed store.
pub const STORE_DIR_ENV: &str = "YOTTA_STORE_DIR";

const CID_PREFIX: &str = "cid:";

/// Length of the textual form: `"cid:"` plus 64 hex characters.
pub const CID_TEXT_LEN: usize = 68;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("payload must not be empty")]
    EmptyPayload,
    #[error("object {0} not found")]
    NotFound(ContentHash),
    #[error("stored bytes for {0} no longer match their hash")]
    IntegrityFailure(ContentHash),
    #[error("distinct payloads collide on {0}")]
    Collision(ContentHash),
    #[error("invalid content hash text {0:?}")]
    BadHash(String),
    #[error("store I/O: {0}")]
    Io(#[from] io::Error),
}

/// Content identifier: SHA-256 of the stored bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    pub fn of(payload: &[u8]) -> ContentHash {
        ContentHash(sha256(&[payload]))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{CID_PREFIX}{}", self.to_hex())
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ContentHash {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || StoreError::BadHash(s.to_owned());
        let hexpart = s.strip_prefix(CID_PREFIX).ok_or_else(bad)?;
        if hexpart.len() != 64 || hexpart.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(bad());
        }
        let v = hex::decode(hexpart).map_err(|_| bad())?;
        Ok(ContentHash(v.try_into().map_err(|_| bad())?))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// True iff `payload` hashes to `hash`.
pub fn verify(hash: &ContentHash, payload: &[u8]) -> bool {
    ContentHash::of(payload) == *hash
}

#[derive(Debug, Clone)]
pub struct StoredObject {
    pub hash: ContentHash,
    pub payload: Arc<[u8]>,
}

impl StoredObject {
    pub fn size(&self) -> usize {
        self.payload.len()
    }

    pub fn is_intact(&self) -> bool {
        verify(&self.hash, &self.payload)
    }
}

enum Backend {
    Memory(RwLock<HashMap<ContentHash, StoredObject>>),
    Dir { root: PathBuf, write: Mutex<()> },
}

pub struct ContentStore {
    backend: Backend,
}

impl fmt::Debug for ContentStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.backend {
            Backend::Memory(_) => f.write_str("ContentStore(memory)"),
            Backend::Dir { root, .. } => write!(f, "ContentStore({})", root.display()),
        }
    }
}

impl Default for ContentStore {
    fn default() -> Self {
        ContentStore::in_memory()
    }
}

impl ContentStore {
    pub fn in_memory() -> Self {
        ContentStore {
            backend: Backend::Memory(RwLock::new(HashMap::new())),
        }
    }

    /// One file per object, named by hex digest, under `root`.
    pub fn open_dir(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(ContentStore {
            backend: Backend::Dir {
                root,
                write: Mutex::new(()),
            },
        })
    }

    /// File-backed if [`STORE_DIR_ENV`] is set, in-memory otherwise.
    pub fn from_env() -> Result<Self, StoreError> {
        match std::env::var_os(STORE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => ContentStore::open_dir(dir),
            _ => Ok(ContentStore::in_memory()),
        }
    }

    pub fn put(&self, payload: &[u8]) -> Result<ContentHash, StoreError> {
        if payload.is_empty() {
            return Err(StoreError::EmptyPayload);
        }
        let hash = ContentHash::of(payload);
        match &self.backend {
            Backend::Memory(map) => {
                let mut map = map.write().expect("store lock");
                if let Some(existing) = map.get(&hash) {
                    if &*existing.payload == payload {
                        return Ok(hash);
                    }
                    if existing.is_intact() {
                        return Err(StoreError::Collision(hash));
                    }
                }
                map.insert(
                    hash,
                    StoredObject {
                        hash,
                        payload: payload.into(),
                    },
                );
            }
            Backend::Dir { root, write } => {
                let _guard = write.lock().expect("store lock");
                let path = root.join(hash.to_hex());
                if let Ok(existing) = fs::read(&path) {
                    if existing == payload {
                        return Ok(hash);
                    }
                    if verify(&hash, &existing) {
                        return Err(StoreError::Collision(hash));
                    }
                }
                let tmp = root.join(format!("{}.tmp", hash.to_hex()));
                fs::write(&tmp, payload)?;
                fs::rename(&tmp, &path)?;
            }
        }
        Ok(hash)
    }

    /// Returns the stored bytes after checking they still hash to `hash`.
    pub fn get(&self, hash: &ContentHash) -> Result<Arc<[u8]>, StoreError> {
        let payload: Arc<[u8]> = match &self.backend {
            Backend::Memory(map) => {
                let map = map.read().expect("store lock");
                map.get(hash)
                    .ok_or(StoreError::NotFound(*hash))?
                    .payload
                    .clone()
            }
            Backend::Dir { root, .. } => match fs::read(root.join(hash.to_hex())) {
                Ok(b) => b.into(),
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    return Err(StoreError::NotFound(*hash))
                }
                Err(e) => return Err(e.into()),
            },
        };
        if !verify(hash, &payload) {
            return Err(StoreError::IntegrityFailure(*hash));
        }
        Ok(payload)
    }

    pub fn contains(&self, hash: &ContentHash) -> bool {
        match &self.backend {
            Backend::Memory(map) => map.read().expect("store lock").contains_key(hash),
            Backend::Dir { root, .. } => root.join(hash.to_hex()).is_file(),
        }
    }

    /// Number of distinct objects held.
    pub fn len(&self) -> usize {
        match &self.backend {
            Backend::Memory(map) => map.read().expect("store lock").len(),
            Backend::Dir { root, .. } => fs::read_dir(root)
                .map(|rd| {
                    rd.filter_map(Result::ok)
                        .filter(|e| e.file_name().len() == 64)
                        .count()
                })
                .unwrap_or(0),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fault injection: replaces the bytes held under `hash` without renaming
    /// the object. Subsequent reads fail with [`StoreError::IntegrityFailure`].
    pub fn tamper(&self, hash: &ContentHash, bytes: &[u8]) -> Result<(), StoreError> {
        match &self.backend {
            Backend::Memory(map) => {
                let mut map = map.write().expect("store lock");
                let obj = map.get_mut(hash).ok_or(StoreError::NotFound(*hash))?;
                obj.payload = bytes.into();
            }
            Backend::Dir { root, write } => {
                let _guard = write.lock().expect("store lock");
                let path = root.join(hash.to_hex());
                if !path.is_file() {
                    return Err(StoreError::NotFound(*hash));
                }
                fs::write(path, bytes)?;
            }
        }
        Ok(())
    }
}
