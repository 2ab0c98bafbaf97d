//! UTC time helpers: day partitions, 15-minute buckets, ISO-8601 text.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DAY_SECONDS: i64 = 86_400;
pub const BUCKET_SECONDS: i64 = 900;
pub const BUCKETS_PER_DAY: usize = 96;

pub fn day_start(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp()
}

pub fn date_of(ts: i64) -> NaiveDate {
    let days = ts.div_euclid(DAY_SECONDS);
    NaiveDate::from_num_days_from_ce_opt(719_163 + days as i32).expect("timestamp in chrono range")
}

pub fn bucket_floor(ts: i64) -> i64 {
    ts - ts.rem_euclid(BUCKET_SECONDS)
}

pub fn is_bucket_aligned(ts: i64) -> bool {
    ts.rem_euclid(BUCKET_SECONDS) == 0
}

/// Bucket starts of one UTC day.
pub fn day_buckets(date: NaiveDate) -> impl Iterator<Item = i64> {
    let start = day_start(date);
    (0..BUCKETS_PER_DAY as i64).map(move |i| start + i * BUCKET_SECONDS)
}

/// `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_iso(ts: i64) -> String {
    match DateTime::<Utc>::from_timestamp(ts, 0) {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => ts.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeParseError {
    #[error("invalid timestamp `{0}` (expected ISO-8601 UTC)")]
    Timestamp(String),
    #[error("invalid date `{0}` (expected YYYY-MM-DD)")]
    Date(String),
    #[error("invalid date range `{0}` (expected YYYY-MM-DD..YYYY-MM-DD)")]
    Range(String),
}

/// Accepts RFC 3339 (`2024-03-01T12:00:00Z`, offsets allowed) or a bare date
/// (midnight UTC).
pub fn parse_iso(s: &str) -> Result<i64, TimeParseError> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(day_start(d));
    }
    Err(TimeParseError::Timestamp(s.to_string()))
}

pub fn parse_date(s: &str) -> Result<NaiveDate, TimeParseError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| TimeParseError::Date(s.to_string()))
}

/// Inclusive range of UTC days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateRange {
    pub fn new(from: NaiveDate, to: NaiveDate) -> Option<Self> {
        (from <= to).then_some(Self { from, to })
    }

    pub fn single(date: NaiveDate) -> Self {
        Self { from: date, to: date }
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let to = self.to;
        self.from.iter_days().take_while(move |d| *d <= to)
    }

    pub fn len(&self) -> usize {
        (self.to - self.from).num_days() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.from, self.to)
    }
}

impl FromStr for DateRange {
    type Err = TimeParseError;

    /// `a..b` (inclusive) or a single date.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TimeParseError::Range(s.to_string());
        match s.split_once("..") {
            Some((a, b)) => {
                let from = parse_date(a).map_err(|_| bad())?;
                let to = parse_date(b).map_err(|_| bad())?;
                DateRange::new(from, to).ok_or_else(bad)
            }
            None => parse_date(s).map(DateRange::single).map_err(|_| bad()),
        }
    }
}

/// Monday = 0 … Sunday = 6.
pub fn weekday_index(date: NaiveDate) -> u32 {
    date.weekday().num_days_from_monday()
}
