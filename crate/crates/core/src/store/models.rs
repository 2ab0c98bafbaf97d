//! ML collection: immutable, content-addressed model artifacts plus an
//! append-only registry mapping a key (e.g. `sector/S01/occupancy`) to its
//! published versions.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, StoreError};
use crate::ml::{ArtifactError, TrainedModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub key: String,
    pub model_id: String,
    pub version: u64,
    /// Selection score recorded at publication, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

pub struct ModelStore {
    dir: PathBuf,
    registry_lock: Mutex<()>,
}

fn artifact_err(e: ArtifactError) -> StoreError {
    StoreError::SchemaMismatch(e.to_string())
}

impl ModelStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            dir,
            registry_lock: Mutex::new(()),
        })
    }

    fn artifact_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Validates and stores an artifact document verbatim. The id is derived
    /// from the content, so publishing the same bytes twice is a no-op.
    pub fn publish_json(&self, text: &str) -> Result<String, StoreError> {
        let model = TrainedModel::<f64>::from_json(text).map_err(artifact_err)?;
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        let id = format!("{}-{}", model.model_kind.as_str().to_lowercase(), &digest[..16]);
        let path = self.artifact_path(&id);
        if !path.exists() {
            let tmp = self.dir.join(format!(".{id}.tmp"));
            fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        }
        Ok(id)
    }

    pub fn publish<T: Scalar>(&self, model: &TrainedModel<T>) -> Result<String, StoreError> {
        self.publish_json(&model.to_json())
    }

    pub fn load_json(&self, id: &str) -> Result<String, StoreError> {
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(StoreError::NotFound(format!("model {id}")));
        }
        let path = self.artifact_path(id);
        fs::read_to_string(&path).map_err(|_| StoreError::NotFound(format!("model {id}")))
    }

    pub fn load<T: Scalar>(&self, id: &str) -> Result<TrainedModel<T>, StoreError> {
        TrainedModel::from_json(&self.load_json(id)?).map_err(artifact_err)
    }

    fn registry_path(&self) -> PathBuf {
        self.dir.join("registry.jsonl")
    }

    pub fn entries(&self) -> Result<Vec<RegistryEntry>, StoreError> {
        let path = self.registry_path();
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        // A torn final line is ignored.
        Ok(text
            .split_inclusive('\n')
            .filter(|l| l.ends_with('\n'))
            .filter_map(|l| serde_json::from_str(l.trim_end()).ok())
            .collect())
    }

    /// Records `model_id` as the newest version for `key`.
    pub fn register(
        &self,
        key: &str,
        model_id: &str,
        score: Option<f64>,
    ) -> Result<RegistryEntry, StoreError> {
        let _guard = self.registry_lock.lock().expect("registry lock poisoned");
        self.load_json(model_id)?;
        let version = self
            .entries()?
            .iter()
            .filter(|e| e.key == key)
            .map(|e| e.version + 1)
            .max()
            .unwrap_or(1);
        let entry = RegistryEntry {
            key: key.to_string(),
            model_id: model_id.to_string(),
            version,
            score,
        };
        let path = self.registry_path();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let line = serde_json::to_string(&entry).expect("registry entry serializes") + "\n";
        f.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
        Ok(entry)
    }

    pub fn latest(&self, key: &str) -> Result<Option<RegistryEntry>, StoreError> {
        Ok(self
            .entries()?
            .into_iter()
            .filter(|e| e.key == key)
            .max_by_key(|e| e.version))
    }
}
