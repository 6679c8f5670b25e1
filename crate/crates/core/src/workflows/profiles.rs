use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::write_atomic;
use super::WorkflowError;
use crate::content_store::ContentId;
use crate::face::{EmbedSource, FaceEmbedding};

/// Reference face embedding cached at registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceProfile {
    pub user_id: String,
    /// Video the embedding was computed from.
    pub video_cid: ContentId,
    pub source: EmbedSource,
    pub embedding: FaceEmbedding,
}

/// User id → reference embedding, one JSON file per user.
#[derive(Debug, Default)]
pub struct FaceProfiles {
    dir: Option<PathBuf>,
    entries: BTreeMap<String, FaceProfile>,
}

impl FaceProfiles {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self, WorkflowError> {
        std::fs::create_dir_all(dir)?;
        let mut entries = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = std::fs::read(&path)?;
            let profile: FaceProfile = serde_json::from_slice(&bytes)
                .map_err(|e| WorkflowError::Corrupt(format!("{}: {e}", path.display())))?;
            entries.insert(profile.user_id.clone(), profile);
        }
        Ok(Self { dir: Some(dir.to_path_buf()), entries })
    }

    fn path(&self, user_id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{user_id}.json")))
    }

    pub fn insert(&mut self, profile: FaceProfile) -> Result<(), WorkflowError> {
        if self.entries.contains_key(&profile.user_id) {
            return Err(WorkflowError::DuplicateUser(profile.user_id));
        }
        if let Some(path) = self.path(&profile.user_id) {
            let json = serde_json::to_vec(&profile).map_err(|e| WorkflowError::Corrupt(e.to_string()))?;
            write_atomic(&path, &json)?;
        }
        self.entries.insert(profile.user_id.clone(), profile);
        Ok(())
    }

    pub fn remove(&mut self, user_id: &str) -> Result<Option<FaceProfile>, WorkflowError> {
        let removed = self.entries.remove(user_id);
        if removed.is_some() {
            if let Some(path) = self.path(user_id) {
                std::fs::remove_file(path)?;
            }
        }
        Ok(removed)
    }

    pub fn get(&self, user_id: &str) -> Option<&FaceProfile> {
        self.entries.get(user_id)
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.entries.contains_key(user_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
