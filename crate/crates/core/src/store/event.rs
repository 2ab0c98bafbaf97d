use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    SectorEntry,
    SectorExit,
    Departure,
    Arrival,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SectorEntry => "SECTOR_ENTRY",
            EventKind::SectorExit => "SECTOR_EXIT",
            EventKind::Departure => "DEPARTURE",
            EventKind::Arrival => "ARRIVAL",
        }
    }

    pub fn is_sector(self) -> bool {
        matches!(self, EventKind::SectorEntry | EventKind::SectorExit)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown event kind `{s}`"))
    }
}

/// One alternative placement of an ambiguous event: `(timestamp, order)`.
/// Serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Candidate(pub i64, pub u8);

/// A raw traffic event in the interchange format. Field order here is the
/// key order on the wire: `fid, kind, res, ts, ag, cand, seq`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlightEvent {
    #[serde(rename = "fid")]
    pub flight_id: String,
    pub kind: EventKind,
    #[serde(rename = "res")]
    pub resource_id: String,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(rename = "ag")]
    pub ambiguity_group: Option<u64>,
    /// Candidate orderings for an ambiguous event. `cand[0]` is the primary
    /// reading (equal to `timestamp`); `cand[j]` is alternative `j`.
    #[serde(rename = "cand")]
    pub candidates: Option<Vec<Candidate>>,
    #[serde(rename = "seq")]
    pub source_seq: u64,
}

impl FlightEvent {
    pub fn new(flight_id: impl Into<String>, kind: EventKind, resource_id: impl Into<String>, timestamp: i64) -> Self {
        Self {
            flight_id: flight_id.into(),
            kind,
            resource_id: resource_id.into(),
            timestamp,
            ambiguity_group: None,
            candidates: None,
            source_seq: 0,
        }
    }

    pub fn with_ambiguity(mut self, group: u64, candidates: Vec<Candidate>) -> Self {
        self.ambiguity_group = Some(group);
        self.candidates = Some(candidates);
        self
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.as_ref().map_or(0, Vec::len)
    }

    /// Timestamp under reading `j` (0 = primary). Events without that many
    /// candidates keep their primary timestamp.
    pub fn timestamp_in(&self, j: usize) -> i64 {
        match &self.candidates {
            Some(c) if j < c.len() => c[j].0,
            _ => self.timestamp,
        }
    }

    /// Identity used for duplicate detection.
    pub fn dedup_key(&self) -> (&str, EventKind, &str, i64) {
        (&self.flight_id, self.kind, &self.resource_id, self.timestamp)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |msg: String| Err(StoreError::Validation(msg));
        if self.flight_id.is_empty() {
            return bad("empty flight id".into());
        }
        if self.resource_id.is_empty() {
            return bad(format!("flight {}: empty resource id", self.flight_id));
        }
        match (&self.ambiguity_group, &self.candidates) {
            (None, None) => Ok(()),
            (Some(_), Some(c)) => {
                if c.len() != 2 && c.len() != 3 {
                    return bad(format!(
                        "flight {}: {} candidates (must be 2 or 3)",
                        self.flight_id,
                        c.len()
                    ));
                }
                if c.iter().enumerate().any(|(i, k)| usize::from(k.1) != i) {
                    return bad(format!("flight {}: candidate order indices must be 0..n", self.flight_id));
                }
                if c[0].0 != self.timestamp {
                    return bad(format!(
                        "flight {}: primary candidate differs from timestamp",
                        self.flight_id
                    ));
                }
                Ok(())
            }
            (Some(_), None) | (None, Some(_)) => bad(format!(
                "flight {}: ambiguity group and candidates must appear together",
                self.flight_id
            )),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serialization is infallible")
    }
}
