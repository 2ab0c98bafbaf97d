//! On-disk storage: an append-only raw store of events and weather, a
//! prepared store of per-day derived collections (FI/ST/SA/PI), and the ML
//! collection of model artifacts.
//!
//! ```text
//! <root>/raw/        events-YYYYMMDD.jsonl (+ .dup), weather-YYYYMMDD.jsonl
//! <root>/prepared/   one directory per prepared day
//! <root>/ml/         <kind>-<digest>.json, registry.jsonl
//! <root>/network.json
//! ```

pub mod event;
pub mod models;
pub mod prepared;
pub mod raw;

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

pub use event::{Candidate, EventKind, FlightEvent};
pub use models::{ModelStore, RegistryEntry};
pub use prepared::{
    AirportRow, PiRow, PrepReport, PreparedDay, PreparedStore, PresenceInterval, StManifest,
};
pub use raw::{read_event_file, write_event_file, AppendReceipt, RawStore};

use crate::network::Network;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid event: {0}")]
    Validation(String),
    #[error("storage full (limit {limit} bytes)")]
    StorageFull { limit: u64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("day {0} is not prepared")]
    NotPrepared(NaiveDate),
}

pub fn io_err(path: &Path, e: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct StoreConfig {
    /// Refuse raw appends once the raw directory would exceed this size.
    pub max_raw_bytes: Option<u64>,
}

pub struct Store {
    root: PathBuf,
    pub raw: RawStore,
    pub prepared: PreparedStore,
    pub models: ModelStore,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>, config: StoreConfig) -> Result<Self, StoreError> {
        let root = root.into();
        Ok(Self {
            raw: RawStore::open(root.join("raw"), config.max_raw_bytes)?,
            prepared: PreparedStore::open(root.join("prepared"))?,
            models: ModelStore::open(root.join("ml"))?,
            root,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn save_network(&self, network: &Network) -> Result<(), StoreError> {
        let path = self.root.join("network.json");
        let text = serde_json::to_string_pretty(network).expect("network serializes");
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    pub fn load_network(&self) -> Result<Network, StoreError> {
        let path = self.root.join("network.json");
        let text = fs::read_to_string(&path)
            .map_err(|_| StoreError::NotFound("network.json (ingest a scenario first)".into()))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Format {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}
