//! Sessions in memory, one JSON document per session on disk.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use spkg_core::campaign::{Campaign, CampaignDocument};
use tokio::sync::RwLock;

use crate::error::ApiError;

pub type SessionHandle = Arc<RwLock<Campaign>>;

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    sessions: std::sync::RwLock<HashMap<String, SessionHandle>>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("data directory {0}: {1}")]
    Dir(PathBuf, std::io::Error),
    #[error("session document {0}: {1}")]
    Document(PathBuf, String),
}

impl Store {
    /// Creates `dir` if needed and loads every session document in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| StoreError::Dir(dir.clone(), e))?;
        // Fail early on a read-only directory.
        let probe = dir.join(".write-check");
        std::fs::write(&probe, b"").map_err(|e| StoreError::Dir(dir.clone(), e))?;
        let _ = std::fs::remove_file(&probe);

        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| StoreError::Dir(dir.clone(), e))? {
            let path = entry.map_err(|e| StoreError::Dir(dir.clone(), e))?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| StoreError::Document(path.clone(), e.to_string()))?;
            let doc: CampaignDocument =
                serde_json::from_str(&text).map_err(|e| StoreError::Document(path.clone(), e.to_string()))?;
            let c = Campaign::from_document(doc).map_err(|e| StoreError::Document(path.clone(), e.to_string()))?;
            sessions.insert(id, Arc::new(RwLock::new(c)));
        }
        tracing::info!(dir = %dir.display(), sessions = sessions.len(), "opened session store");
        Ok(Self {
            dir,
            sessions: std::sync::RwLock::new(sessions),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session map poisoned")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Persists a new campaign and registers it under a fresh id.
    pub fn insert(&self, campaign: Campaign) -> Result<String, ApiError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.persist(&id, &campaign)?;
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(RwLock::new(campaign)));
        Ok(id)
    }

    /// Writes the session document to a temporary file, syncs it and renames
    /// it over the previous one.
    pub fn persist(&self, id: &str, campaign: &Campaign) -> Result<(), ApiError> {
        let text = serde_json::to_vec_pretty(&campaign.to_document()).map_err(|e| ApiError::internal(e.to_string()))?;
        let path = self.dir.join(format!("{id}.json"));
        let tmp = self.dir.join(format!(".{id}.json.tmp"));
        let write = || -> std::io::Result<()> {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&text)?;
            f.sync_all()?;
            std::fs::rename(&tmp, &path)
        };
        write().map_err(|e| ApiError::internal(format!("persisting session {id}: {e}")))
    }
}
