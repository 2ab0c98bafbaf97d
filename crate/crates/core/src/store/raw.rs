//! Append-only raw store: one JSONL segment per UTC day.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::event::{EventKind, FlightEvent};
use super::{io_err, StoreError};
use crate::metar::TimedObservation;
use crate::timeutil::date_of;

type DupKey = (String, EventKind, String, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppendReceipt {
    pub seq: u64,
    /// Same flight, kind, resource and timestamp as an earlier record.
    pub duplicate: bool,
}

struct Segment {
    file: File,
    dup_path: PathBuf,
    next_seq: u64,
    keys: HashSet<DupKey>,
}

struct State {
    segments: HashMap<NaiveDate, Segment>,
    total_bytes: u64,
}

pub struct RawStore {
    dir: PathBuf,
    max_bytes: Option<u64>,
    state: Mutex<State>,
}

pub fn segment_name(date: NaiveDate) -> String {
    format!("events-{}.jsonl", date.format("%Y%m%d"))
}

pub const WEATHER_PREFIX: &str = "weather";
pub const RC_PREFIX: &str = "rc";

fn aux_name(prefix: &str, date: NaiveDate) -> String {
    format!("{prefix}-{}.jsonl", date.format("%Y%m%d"))
}

/// Splits `bytes` into complete newline-terminated lines; an unterminated
/// tail (a torn write) is discarded. Returns the lines and the byte length
/// of the whole-record prefix.
fn whole_lines(bytes: &[u8]) -> (Vec<&[u8]>, usize) {
    let end = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let lines = bytes[..end]
        .split(|&b| b == b'\n')
        .collect::<Vec<_>>();
    // `split` yields a trailing empty slice after the final newline.
    let lines = match lines.split_last() {
        Some((last, rest)) if last.is_empty() => rest.to_vec(),
        _ => lines,
    };
    (lines, end)
}

/// Parses whole JSONL records, failing on the first bad line (1-based).
fn parse_lines(path: &Path, lines: &[&[u8]]) -> Result<Vec<FlightEvent>, StoreError> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_slice::<FlightEvent>(l).map_err(|e| StoreError::Format {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

impl RawStore {
    pub fn open(dir: impl Into<PathBuf>, max_bytes: Option<u64>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut total_bytes = 0;
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            total_bytes += entry.metadata().map_err(|e| io_err(&entry.path(), e))?.len();
        }
        Ok(Self {
            dir,
            max_bytes,
            state: Mutex::new(State {
                segments: HashMap::new(),
                total_bytes,
            }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn segment_path(&self, date: NaiveDate) -> PathBuf {
        self.dir.join(segment_name(date))
    }

    /// Opens a segment for appending, first truncating any torn trailing
    /// record left by an interrupted write.
    fn open_segment(&self, date: NaiveDate, state: &mut State) -> Result<Segment, StoreError> {
        let path = self.segment_path(date);
        let mut next_seq = 0;
        let mut keys = HashSet::new();
        if path.exists() {
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let (lines, keep) = whole_lines(&bytes);
            let events = parse_lines(&path, &lines)?;
            if keep < bytes.len() {
                let f = OpenOptions::new()
                    .write(true)
                    .open(&path)
                    .map_err(|e| io_err(&path, e))?;
                f.set_len(keep as u64).map_err(|e| io_err(&path, e))?;
                state.total_bytes -= (bytes.len() - keep) as u64;
            }
            if let Some(last) = events.last() {
                next_seq = last.source_seq + 1;
            }
            keys = events
                .into_iter()
                .map(|e| (e.flight_id, e.kind, e.resource_id, e.timestamp))
                .collect();
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        Ok(Segment {
            file,
            dup_path: path.with_extension("dup"),
            next_seq,
            keys,
        })
    }

    /// Validates and durably appends events, assigning per-segment sequence
    /// numbers. Each event goes to the segment of its own UTC day.
    pub fn append_batch(&self, events: &[FlightEvent]) -> Result<Vec<AppendReceipt>, StoreError> {
        for e in events {
            e.validate()?;
        }
        let mut state = self.state.lock().expect("raw store lock poisoned");
        let mut receipts = Vec::with_capacity(events.len());
        let mut pending: Vec<(NaiveDate, Vec<u8>, Vec<u64>)> = Vec::new();
        let mut added = 0u64;
        for e in events {
            let date = date_of(e.timestamp);
            if !state.segments.contains_key(&date) {
                let seg = self.open_segment(date, &mut state)?;
                state.segments.insert(date, seg);
            }
            let seg = state.segments.get_mut(&date).expect("segment just opened");
            let seq = seg.next_seq;
            seg.next_seq += 1;
            let duplicate = !seg.keys.insert((
                e.flight_id.clone(),
                e.kind,
                e.resource_id.clone(),
                e.timestamp,
            ));
            let mut rec = e.clone();
            rec.source_seq = seq;
            let mut line = rec.to_json_line().into_bytes();
            line.push(b'\n');
            added += line.len() as u64;
            let slot = match pending.iter().position(|(d, _, _)| *d == date) {
                Some(i) => i,
                None => {
                    pending.push((date, Vec::new(), Vec::new()));
                    pending.len() - 1
                }
            };
            pending[slot].1.extend_from_slice(&line);
            if duplicate {
                pending[slot].2.push(seq);
            }
            receipts.push(AppendReceipt { seq, duplicate });
        }
        if let Some(limit) = self.max_bytes {
            if state.total_bytes + added > limit {
                // Roll back the sequence numbers handed out above.
                for (date, _, _) in &pending {
                    state.segments.remove(date);
                }
                return Err(StoreError::StorageFull { limit });
            }
        }
        for (date, bytes, dups) in pending {
            let seg = state.segments.get_mut(&date).expect("segment open");
            seg.file
                .write_all(&bytes)
                .and_then(|()| seg.file.flush())
                .map_err(|e| io_err(&self.segment_path(date), e))?;
            if !dups.is_empty() {
                let mut side = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&seg.dup_path)
                    .map_err(|e| io_err(&seg.dup_path, e))?;
                let text: String = dups.iter().map(|s| format!("{s}\n")).collect();
                side.write_all(text.as_bytes())
                    .map_err(|e| io_err(&seg.dup_path, e))?;
            }
        }
        state.total_bytes += added;
        Ok(receipts)
    }

    pub fn append(&self, event: &FlightEvent) -> Result<AppendReceipt, StoreError> {
        Ok(self.append_batch(std::slice::from_ref(event))?[0])
    }

    /// All whole records of a day in sequence order. A torn trailing record
    /// is ignored.
    pub fn read_day(&self, date: NaiveDate) -> Result<Vec<FlightEvent>, StoreError> {
        let path = self.segment_path(date);
        if !path.exists() {
            return Err(StoreError::NotFound(format!("raw partition {date}")));
        }
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let (lines, _) = whole_lines(&bytes);
        parse_lines(&path, &lines)
    }

    /// Sequence numbers flagged as duplicates in a day's segment.
    pub fn duplicates(&self, date: NaiveDate) -> Result<Vec<u64>, StoreError> {
        let path = self.segment_path(date).with_extension("dup");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        Ok(text.lines().filter_map(|l| l.trim().parse().ok()).collect())
    }

    pub fn has_day(&self, date: NaiveDate) -> bool {
        self.segment_path(date).exists()
    }

    /// Days with a raw event segment, ascending.
    pub fn days(&self) -> Result<Vec<NaiveDate>, StoreError> {
        self.days_with_prefix("events")
    }

    /// Days with stored weather, ascending.
    pub fn weather_days(&self) -> Result<Vec<NaiveDate>, StoreError> {
        self.days_with_prefix(WEATHER_PREFIX)
    }

    fn days_with_prefix(&self, prefix: &str) -> Result<Vec<NaiveDate>, StoreError> {
        let mut out = Vec::new();
        let lead = format!("{prefix}-");
        for entry in fs::read_dir(&self.dir).map_err(|e| io_err(&self.dir, e))? {
            let name = entry.map_err(|e| io_err(&self.dir, e))?.file_name();
            let name = name.to_string_lossy();
            if let Some(d) = name
                .strip_prefix(lead.as_str())
                .and_then(|s| s.strip_suffix(".jsonl"))
                .and_then(|s| NaiveDate::parse_from_str(s, "%Y%m%d").ok())
            {
                out.push(d);
            }
        }
        out.sort();
        Ok(out)
    }

    /// Appends auxiliary JSONL records (weather, runway configurations) to
    /// `<prefix>-YYYYMMDD.jsonl`, grouped by the UTC day of each record.
    pub fn append_records<R: Serialize>(
        &self,
        prefix: &str,
        records: &[R],
        ts_of: impl Fn(&R) -> i64,
    ) -> Result<(), StoreError> {
        let _guard = self.state.lock().expect("raw store lock poisoned");
        let mut by_day: Vec<(NaiveDate, String)> = Vec::new();
        for r in records {
            let date = date_of(ts_of(r));
            let line = serde_json::to_string(r).expect("record serialization is infallible");
            match by_day.iter_mut().find(|(d, _)| *d == date) {
                Some((_, buf)) => {
                    buf.push_str(&line);
                    buf.push('\n');
                }
                None => by_day.push((date, format!("{line}\n"))),
            }
        }
        for (date, text) in by_day {
            let path = self.dir.join(aux_name(prefix, date));
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| io_err(&path, e))?;
            f.write_all(text.as_bytes()).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// Auxiliary records stored for a day; empty if none.
    pub fn read_records<R: DeserializeOwned>(
        &self,
        prefix: &str,
        date: NaiveDate,
    ) -> Result<Vec<R>, StoreError> {
        let path = self.dir.join(aux_name(prefix, date));
        if !path.exists() {
            return Ok(Vec::new());
        }
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let (lines, _) = whole_lines(&bytes);
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_slice(l).map_err(|e| StoreError::Format {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub fn append_weather(&self, observations: &[TimedObservation]) -> Result<(), StoreError> {
        self.append_records(WEATHER_PREFIX, observations, |o| o.ts)
    }

    pub fn read_weather(&self, date: NaiveDate) -> Result<Vec<TimedObservation>, StoreError> {
        self.read_records(WEATHER_PREFIX, date)
    }
}

/// Strict reader for an event interchange file: events in file order, the
/// first malformed or truncated line is a format error.
pub fn read_event_file(path: &Path) -> Result<Vec<FlightEvent>, StoreError> {
    let text = fs::read(path).map_err(|e| io_err(path, e))?;
    parse_event_bytes(path, &text)
}

pub fn parse_event_bytes(path: &Path, bytes: &[u8]) -> Result<Vec<FlightEvent>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let ev: FlightEvent = serde_json::from_slice(line).map_err(|e| StoreError::Format {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}

/// Writes events as an interchange file, one record per line.
pub fn write_event_file(path: &Path, events: &[FlightEvent]) -> Result<(), StoreError> {
    let mut text = String::new();
    for e in events {
        text.push_str(&e.to_json_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}
