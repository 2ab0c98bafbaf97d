//! Prepared store: per-day derived collections.
//!
//! Layout of one prepared day:
//!
//! ```text
//! prepared/YYYYMMDD/CURRENT        name of the live generation directory
//! prepared/YYYYMMDD/gen-N/fi-0000.jsonl   presence intervals (FI)
//!                        st.json          partition manifest (ST)
//!                        sa.json          sector -> interval index (SA)
//!                        pi.jsonl         bucket aggregates (PI)
//!                        pi.csv           PI export
//!                        pi-airports.csv  airport arrivals/departures per bucket
//!                        report.json      preparation report
//! ```
//!
//! A new generation is written completely, then `CURRENT` is replaced by
//! rename, so readers see either the old day or the new one.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{io_err, StoreError};
use crate::timeutil::format_iso;

/// FI partitions are split every this many intervals.
pub const FI_PARTITION_SIZE: usize = 100_000;

/// A reconciled presence of one flight in one sector, half-open `[entry, exit)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceInterval {
    pub flight_id: String,
    pub sector: String,
    pub entry: i64,
    pub exit: i64,
    /// False when no exit was seen and the interval runs to the end of the day.
    pub closed: bool,
    pub ambiguity_group: Option<u64>,
    /// `(entry, exit)` under alternative readings 1 and 2, when ambiguous.
    pub alternatives: Vec<(i64, i64)>,
}

/// One 15-minute bucket of one sector: occupancy and flow counts plus the
/// counts under alternative readings of ambiguous events (those differing
/// from the primary count only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiRow {
    pub sector: String,
    pub bucket_start: i64,
    pub occupancy: u32,
    pub entries: u32,
    pub exits: u32,
    pub alt_occupancy: Vec<u32>,
    pub alt_entries: Vec<u32>,
    pub alt_exits: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AirportRow {
    pub airport: String,
    pub bucket_start: i64,
    pub arrivals: u32,
    pub departures: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepReport {
    pub date: String,
    pub events_read: usize,
    pub duplicates_collapsed: usize,
    pub intervals: usize,
    pub open_intervals: usize,
    pub ambiguous_intervals: usize,
    /// Exits with no open entry.
    pub dropped_exits: usize,
    /// Entries repeated while the flight was already inside the sector.
    pub dropped_entries: usize,
    /// Events for resources not in the network.
    pub unknown_resources: usize,
    /// Events timestamped outside the partition's day.
    pub out_of_day: usize,
    pub sectors: usize,
    pub pi_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiPartition {
    pub file: String,
    pub intervals: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StManifest {
    pub date: String,
    pub partitions: Vec<FiPartition>,
}

/// `(partition index, line index)` references into FI.
pub type SaIndex = BTreeMap<String, Vec<(usize, usize)>>;

/// Everything derived from one raw day.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDay {
    pub date: NaiveDate,
    pub intervals: Vec<PresenceInterval>,
    pub pi: Vec<PiRow>,
    pub airports: Vec<AirportRow>,
    pub report: PrepReport,
}

pub const PI_CSV_HEADER: &str = "sector,bucket_start,occupancy,entries,exits,alt1,alt2";
pub const AIRPORT_CSV_HEADER: &str = "airport,bucket_start,arrivals,departures";

/// PI export: occupancy alternatives go in `alt1`/`alt2`, empty when absent.
pub fn pi_csv(rows: &[PiRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 48);
    out.push_str(PI_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let alt = |i: usize| r.alt_occupancy.get(i).map(u32::to_string).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.sector,
            format_iso(r.bucket_start),
            r.occupancy,
            r.entries,
            r.exits,
            alt(0),
            alt(1)
        );
    }
    out
}

pub fn airport_csv(rows: &[AirportRow]) -> String {
    let mut out = String::from(AIRPORT_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.airport,
            format_iso(r.bucket_start),
            r.arrivals,
            r.departures
        );
    }
    out
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for i in items {
        out.push_str(&serde_json::to_string(i).expect("record serialization is infallible"));
        out.push('\n');
    }
    out
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Format {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Format {
        path: path.display().to_string(),
        line: 1,
        message: e.to_string(),
    })
}

pub struct PreparedStore {
    dir: PathBuf,
}

impl PreparedStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self { dir })
    }

    fn day_dir(&self, date: NaiveDate) -> PathBuf {
        self.dir.join(date.format("%Y%m%d").to_string())
    }

    /// Directory of the live generation of a day.
    pub fn current_dir(&self, date: NaiveDate) -> Result<PathBuf, StoreError> {
        let day = self.day_dir(date);
        let pointer = day.join("CURRENT");
        match fs::read_to_string(&pointer) {
            Ok(name) => Ok(day.join(name.trim())),
            Err(_) => Err(StoreError::NotPrepared(date)),
        }
    }

    pub fn is_prepared(&self, date: NaiveDate) -> bool {
        self.current_dir(date).is_ok()
    }

    /// Writes a new generation for the day and atomically makes it current.
    /// Older generations except the one just replaced are removed.
    pub fn write_day(&self, day: &PreparedDay) -> Result<PathBuf, StoreError> {
        let day_dir = self.day_dir(day.date);
        fs::create_dir_all(&day_dir).map_err(|e| io_err(&day_dir, e))?;
        let previous = self.current_dir(day.date).ok();
        let next_gen = fs::read_dir(&day_dir)
            .map_err(|e| io_err(&day_dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_string_lossy()
                    .strip_prefix("gen-")
                    .and_then(|n| n.parse::<u64>().ok())
            })
            .max()
            .map_or(0, |n| n + 1);
        let gen_name = format!("gen-{next_gen}");
        let gen_dir = day_dir.join(&gen_name);
        fs::create_dir_all(&gen_dir).map_err(|e| io_err(&gen_dir, e))?;
        let write = |name: &str, text: &str| {
            let p = gen_dir.join(name);
            fs::write(&p, text).map_err(|e| io_err(&p, e))
        };

        let mut manifest = StManifest {
            date: day.date.to_string(),
            partitions: Vec::new(),
        };
        let mut sa: SaIndex = BTreeMap::new();
        for (p, chunk) in day.intervals.chunks(FI_PARTITION_SIZE).enumerate() {
            let file = format!("fi-{p:04}.jsonl");
            write(&file, &jsonl(chunk))?;
            for (line, iv) in chunk.iter().enumerate() {
                sa.entry(iv.sector.clone()).or_default().push((p, line));
            }
            manifest.partitions.push(FiPartition {
                file,
                intervals: chunk.len(),
            });
        }
        write("st.json", &serde_json::to_string_pretty(&manifest).expect("manifest"))?;
        write("sa.json", &serde_json::to_string(&sa).expect("index"))?;
        write("pi.jsonl", &jsonl(&day.pi))?;
        write("pi.csv", &pi_csv(&day.pi))?;
        write("pi-airports.csv", &airport_csv(&day.airports))?;
        write("pi-airports.jsonl", &jsonl(&day.airports))?;
        write("report.json", &serde_json::to_string_pretty(&day.report).expect("report"))?;

        let tmp = day_dir.join("CURRENT.tmp");
        fs::write(&tmp, &gen_name).map_err(|e| io_err(&tmp, e))?;
        let pointer = day_dir.join("CURRENT");
        fs::rename(&tmp, &pointer).map_err(|e| io_err(&pointer, e))?;

        for entry in fs::read_dir(&day_dir).map_err(|e| io_err(&day_dir, e))?.flatten() {
            let path = entry.path();
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with("gen-") && path != gen_dir && Some(&path) != previous.as_ref() {
                let _ = fs::remove_dir_all(&path);
            }
        }
        Ok(gen_dir)
    }

    pub fn read_pi(&self, date: NaiveDate) -> Result<Vec<PiRow>, StoreError> {
        read_jsonl(&self.current_dir(date)?.join("pi.jsonl"))
    }

    pub fn read_airports(&self, date: NaiveDate) -> Result<Vec<AirportRow>, StoreError> {
        read_jsonl(&self.current_dir(date)?.join("pi-airports.jsonl"))
    }

    pub fn read_report(&self, date: NaiveDate) -> Result<PrepReport, StoreError> {
        read_json(&self.current_dir(date)?.join("report.json"))
    }

    pub fn read_manifest(&self, date: NaiveDate) -> Result<StManifest, StoreError> {
        read_json(&self.current_dir(date)?.join("st.json"))
    }

    pub fn read_intervals(&self, date: NaiveDate) -> Result<Vec<PresenceInterval>, StoreError> {
        let dir = self.current_dir(date)?;
        let manifest: StManifest = read_json(&dir.join("st.json"))?;
        let mut out = Vec::new();
        for p in &manifest.partitions {
            out.extend(read_jsonl::<PresenceInterval>(&dir.join(&p.file))?);
        }
        Ok(out)
    }

    /// Intervals of one sector, looked up through the SA index.
    pub fn sector_intervals(
        &self,
        date: NaiveDate,
        sector: &str,
    ) -> Result<Vec<PresenceInterval>, StoreError> {
        let dir = self.current_dir(date)?;
        let manifest: StManifest = read_json(&dir.join("st.json"))?;
        let sa: SaIndex = read_json(&dir.join("sa.json"))?;
        let Some(refs) = sa.get(sector) else {
            return Ok(Vec::new());
        };
        let mut partitions: BTreeMap<usize, Vec<PresenceInterval>> = BTreeMap::new();
        let mut out = Vec::with_capacity(refs.len());
        for &(p, line) in refs {
            if !partitions.contains_key(&p) {
                let part = manifest.partitions.get(p).ok_or_else(|| {
                    StoreError::NotFound(format!("FI partition {p} of {date}"))
                })?;
                partitions.insert(p, read_jsonl(&dir.join(&part.file))?);
            }
            let iv = partitions[&p].get(line).cloned().ok_or_else(|| {
                StoreError::NotFound(format!("FI record {p}:{line} of {date}"))
            })?;
            out.push(iv);
        }
        Ok(out)
    }

    /// Raw bytes of a day's PI export.
    pub fn pi_csv_bytes(&self, date: NaiveDate) -> Result<Vec<u8>, StoreError> {
        let p = self.current_dir(date)?.join("pi.csv");
        fs::read(&p).map_err(|e| io_err(&p, e))
    }
}
