//! Content-addressed blob store.
//!
//! Blobs are addressed by the SHA-256 digest of their stored bytes and kept
//! as whole files under `<root>/objects/<hex-digest>`. An in-memory index
//! mirrors the directory so lookups never scan the disk.
//!
//! Encrypted blobs are stored as an envelope:
//!
//! ```text
//! "FBT1" (4 bytes) | nonce (12 bytes) | ciphertext | tag (16 bytes)
//! ```
//!
//! and their [`ContentId`] is computed over the whole envelope.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// Text prefix of a [`ContentId`].
pub const CID_PREFIX: &str = "cid-sha256:";
/// Magic bytes opening an encrypted envelope.
pub const ENVELOPE_MAGIC: &[u8; 4] = b"FBT1";
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("NotFound: no blob stored under {0}")]
    NotFound(ContentId),
    #[error("IntegrityViolation: stored bytes for {0} no longer match their digest")]
    IntegrityViolation(ContentId),
    #[error("StorageFull: storing {needed} bytes would exceed the {capacity}-byte capacity")]
    StorageFull { needed: u64, capacity: u64 },
    #[error("AuthenticationFailed: wrong key or tampered ciphertext")]
    AuthenticationFailed,
    #[error("invalid content id {0:?}")]
    InvalidContentId(String),
    #[error("invalid encryption key: {0}")]
    InvalidKey(String),
    #[error("store i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Digest-based address of a stored blob.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentId([u8; 32]);

impl ContentId {
    /// Computes the address of `bytes`. Pure function of the input.
    pub fn compute(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn from_digest(digest: [u8; 32]) -> Self {
        Self(digest)
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn algorithm(&self) -> &'static str {
        "sha256"
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// Free-function form of [`ContentId::compute`].
pub fn compute_cid(blob: &[u8]) -> ContentId {
    ContentId::compute(blob)
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{CID_PREFIX}{}", self.to_hex())
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for ContentId {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self> {
        let hex_part = s
            .strip_prefix(CID_PREFIX)
            .ok_or_else(|| StoreError::InvalidContentId(s.to_string()))?;
        // Canonical form is lowercase only.
        if hex_part.len() != 64 || hex_part.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(StoreError::InvalidContentId(s.to_string()));
        }
        let mut digest = [0u8; 32];
        hex::decode_to_slice(hex_part, &mut digest)
            .map_err(|_| StoreError::InvalidContentId(s.to_string()))?;
        Ok(Self(digest))
    }
}

impl Serialize for ContentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 32-byte symmetric key for AES-256-GCM. Deliberately not serializable.
#[derive(Clone, PartialEq, Eq)]
pub struct EncryptionKey([u8; 32]);

impl EncryptionKey {
    pub fn new(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| StoreError::InvalidKey(format!("expected 32 bytes, got {}", bytes.len())))?;
        Ok(Self(arr))
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| StoreError::InvalidKey(e.to_string()))?;
        Self::from_slice(&bytes)
    }

    pub fn generate() -> Self {
        let mut bytes = [0u8; 32];
        rand::rngs::OsRng.fill_bytes(&mut bytes);
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for EncryptionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("EncryptionKey(<redacted>)")
    }
}

/// Wraps `plaintext` in an authenticated envelope under a fresh random nonce.
pub fn seal_envelope(plaintext: &[u8], key: &EncryptionKey) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    rand::rngs::OsRng.fill_bytes(&mut nonce);
    let cipher = Aes256Gcm::new(key.as_bytes().into());
    // aes-gcm appends the 16-byte tag to the ciphertext, matching the envelope layout.
    let sealed = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("AES-GCM encryption of an in-memory buffer cannot fail");
    let mut out = Vec::with_capacity(4 + NONCE_LEN + sealed.len());
    out.extend_from_slice(ENVELOPE_MAGIC);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&sealed);
    out
}

/// Opens an envelope produced by [`seal_envelope`].
///
/// Any malformed framing is reported as `AuthenticationFailed`: the bytes are
/// not an authentic envelope for this key.
pub fn open_envelope(envelope: &[u8], key: &EncryptionKey) -> Result<Vec<u8>> {
    if envelope.len() < 4 + NONCE_LEN + TAG_LEN || &envelope[..4] != ENVELOPE_MAGIC {
        return Err(StoreError::AuthenticationFailed);
    }
    let nonce = Nonce::from_slice(&envelope[4..4 + NONCE_LEN]);
    let cipher = Aes256Gcm::new(key.as_bytes().into());
    cipher
        .decrypt(nonce, &envelope[4 + NONCE_LEN..])
        .map_err(|_| StoreError::AuthenticationFailed)
}

/// Content-addressed store rooted at a directory.
///
/// Reads may run concurrently; writes are serialized through an internal
/// writer lock and land atomically (temp file + rename).
pub struct ContentStore {
    objects: PathBuf,
    index: RwLock<HashMap<ContentId, u64>>,
    writer: Mutex<()>,
    capacity: Option<u64>,
    gets: AtomicU64,
}

impl fmt::Debug for ContentStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContentStore")
            .field("objects", &self.objects)
            .field("len", &self.len())
            .field("capacity", &self.capacity)
            .finish()
    }
}

impl ContentStore {
    /// Opens (or creates) a store under `root`, rebuilding the index from
    /// the objects directory.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        Self::open_with_capacity(root, None)
    }

    /// Like [`ContentStore::open`] with a cap on total stored bytes.
    pub fn open_with_capacity(root: impl AsRef<Path>, capacity: Option<u64>) -> Result<Self> {
        let objects = root.as_ref().join("objects");
        fs::create_dir_all(&objects)?;
        let mut index = HashMap::new();
        for entry in fs::read_dir(&objects)? {
            let entry = entry?;
            let name = entry.file_name();
            let Some(name) = name.to_str() else { continue };
            let mut digest = [0u8; 32];
            if name.len() != 64 || hex::decode_to_slice(name, &mut digest).is_err() {
                // temp files from an interrupted put
                continue;
            }
            index.insert(ContentId(digest), entry.metadata()?.len());
        }
        Ok(Self {
            objects,
            index: RwLock::new(index),
            writer: Mutex::new(()),
            capacity,
            gets: AtomicU64::new(0),
        })
    }

    pub fn object_path(&self, id: &ContentId) -> PathBuf {
        self.objects.join(id.to_hex())
    }

    /// Stores `blob` and returns its address. Re-putting identical bytes is a
    /// no-op returning the same id.
    pub fn put(&self, blob: &[u8]) -> Result<ContentId> {
        self.put_tracked(blob).map(|(id, _)| id)
    }

    /// Like [`ContentStore::put`], also reporting whether a new object was
    /// written (`false` when the bytes were already present).
    pub fn put_tracked(&self, blob: &[u8]) -> Result<(ContentId, bool)> {
        let id = ContentId::compute(blob);
        self.write_object(id, blob)
    }

    /// Encrypts `blob` under `key` and stores the envelope. Each call uses a
    /// fresh nonce, so equal plaintexts get different ids.
    pub fn put_encrypted(&self, blob: &[u8], key: &EncryptionKey) -> Result<ContentId> {
        self.put_encrypted_tracked(blob, key).map(|(id, _)| id)
    }

    pub fn put_encrypted_tracked(
        &self,
        blob: &[u8],
        key: &EncryptionKey,
    ) -> Result<(ContentId, bool)> {
        let envelope = seal_envelope(blob, key);
        let id = ContentId::compute(&envelope);
        self.write_object(id, &envelope)
    }

    fn write_object(&self, id: ContentId, bytes: &[u8]) -> Result<(ContentId, bool)> {
        let _guard = self.writer.lock().expect("content store writer lock poisoned");
        if self.index.read().expect("content store index poisoned").contains_key(&id) {
            return Ok((id, false));
        }
        if let Some(capacity) = self.capacity {
            let needed = self.total_bytes() + bytes.len() as u64;
            if needed > capacity {
                return Err(StoreError::StorageFull { needed, capacity });
            }
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&self.objects)?;
        tmp.write_all(bytes)?;
        tmp.persist(self.object_path(&id)).map_err(|e| e.error)?;
        self.index
            .write()
            .expect("content store index poisoned")
            .insert(id, bytes.len() as u64);
        Ok((id, true))
    }

    /// Returns the stored bytes, re-verifying their digest.
    pub fn get(&self, id: &ContentId) -> Result<Vec<u8>> {
        let bytes = self.read_raw(id)?;
        if ContentId::compute(&bytes) != *id {
            return Err(StoreError::IntegrityViolation(*id));
        }
        Ok(bytes)
    }

    /// Fetches and decrypts an envelope stored by [`ContentStore::put_encrypted`].
    ///
    /// Authentication runs before the digest check, so a mutated ciphertext
    /// surfaces as `AuthenticationFailed` rather than `IntegrityViolation`.
    pub fn get_decrypted(&self, id: &ContentId, key: &EncryptionKey) -> Result<Vec<u8>> {
        let envelope = self.read_raw(id)?;
        let plaintext = open_envelope(&envelope, key)?;
        if ContentId::compute(&envelope) != *id {
            return Err(StoreError::IntegrityViolation(*id));
        }
        Ok(plaintext)
    }

    fn read_raw(&self, id: &ContentId) -> Result<Vec<u8>> {
        self.gets.fetch_add(1, Ordering::Relaxed);
        if !self.contains(id) {
            return Err(StoreError::NotFound(*id));
        }
        match fs::read(self.object_path(id)) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound(*id)),
            Err(e) => Err(e.into()),
        }
    }

    /// Removes an object. Only used to roll back writes of a failed
    /// multi-step operation; the store has no garbage collection.
    pub fn discard(&self, id: &ContentId) -> Result<()> {
        let _guard = self.writer.lock().expect("content store writer lock poisoned");
        if self
            .index
            .write()
            .expect("content store index poisoned")
            .remove(id)
            .is_some()
        {
            fs::remove_file(self.object_path(id))?;
        }
        Ok(())
    }

    pub fn contains(&self, id: &ContentId) -> bool {
        self.index.read().expect("content store index poisoned").contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("content store index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_bytes(&self) -> u64 {
        self.index.read().expect("content store index poisoned").values().sum()
    }

    /// All ids currently stored, sorted.
    pub fn ids(&self) -> Vec<ContentId> {
        let mut ids: Vec<_> = self
            .index
            .read()
            .expect("content store index poisoned")
            .keys()
            .copied()
            .collect();
        ids.sort();
        ids
    }

    /// Number of `get`/`get_decrypted` calls served so far.
    pub fn get_count(&self) -> u64 {
        self.gets.load(Ordering::Relaxed)
    }
}
