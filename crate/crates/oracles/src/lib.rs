//! Brute-force reference implementations used only by tests.
//!
//! Nothing here depends on the crates being checked; inputs use their own
//! plain types and the code favours the most literal reading over speed.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const BUCKET: i64 = 900;
pub const BUCKETS: usize = 96;

/// Outcome of one compared case.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub case_id: String,
    pub expected: String,
    pub actual: String,
    pub matched: bool,
}

impl OracleReport {
    pub fn compare<T: PartialEq + std::fmt::Debug>(case_id: impl Into<String>, expected: &T, actual: &T) -> Self {
        Self {
            case_id: case_id.into(),
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
            matched: expected == actual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleKind {
    Entry,
    Exit,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OracleEvent {
    pub flight: String,
    pub kind: OracleKind,
    pub sector: String,
    pub ts: i64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleCounts {
    pub occupancy: Vec<u32>,
    pub entries: Vec<u32>,
    pub exits: Vec<u32>,
    /// Events that could not be used (outside the day, unpaired exits,
    /// repeated entries, duplicates).
    pub skipped: usize,
}

/// `(flight, start, end, closed)`.
type Presence = (String, i64, i64, bool);

/// Pairs one sector's events into presences. Duplicates (same flight,
/// kind, time) keep the lowest sequence number; per flight the events are
/// taken in (time, entries before exits, sequence) order; an entry while
/// inside is ignored, an exit while outside is ignored, and a flight still
/// inside at midnight stays until the end of the day.
fn presences(events: &[OracleEvent], sector: &str, day_start: i64) -> (Vec<Presence>, usize) {
    let day_end = day_start + SECONDS_PER_DAY;
    let mut skipped = 0;
    let mut ordered: Vec<&OracleEvent> = events.iter().filter(|e| e.sector == sector).collect();
    ordered.sort_by_key(|e| e.seq);
    let mut seen = HashSet::new();
    let mut per_flight: BTreeMap<&str, Vec<&OracleEvent>> = BTreeMap::new();
    for e in ordered {
        if e.ts < day_start || e.ts >= day_end {
            skipped += 1;
            continue;
        }
        if !seen.insert((e.flight.as_str(), e.kind, e.ts)) {
            skipped += 1;
            continue;
        }
        per_flight.entry(&e.flight).or_default().push(e);
    }
    let mut out = Vec::new();
    for (flight, mut evs) in per_flight {
        evs.sort_by_key(|e| (e.ts, matches!(e.kind, OracleKind::Exit), e.seq));
        let mut inside: Option<i64> = None;
        for e in evs {
            match (e.kind, inside) {
                (OracleKind::Entry, None) => inside = Some(e.ts),
                (OracleKind::Exit, Some(t)) => {
                    out.push((flight.to_string(), t, e.ts, true));
                    inside = None;
                }
                _ => skipped += 1,
            }
        }
        if let Some(t) = inside {
            out.push((flight.to_string(), t, day_end, false));
        }
    }
    (out, skipped)
}

fn flows(p: &[Presence], day_start: i64) -> (Vec<u32>, Vec<u32>) {
    let mut entries = vec![0; BUCKETS];
    let mut exits = vec![0; BUCKETS];
    for (_, a, b, closed) in p {
        entries[((a - day_start) / BUCKET) as usize] += 1;
        if *closed {
            exits[((b - day_start) / BUCKET) as usize] += 1;
        }
    }
    (entries, exits)
}

/// Literal replay: for each second of the day, scan every presence and add
/// the flights covering that second to the second's bucket.
pub fn occupancy_oracle(events: &[OracleEvent], sector: &str, day_start: i64) -> OracleCounts {
    let (p, skipped) = presences(events, sector, day_start);
    let mut sets: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); BUCKETS];
    for s in 0..SECONDS_PER_DAY {
        let t = day_start + s;
        for (flight, a, b, _) in &p {
            if *a <= t && t < *b {
                sets[(s / BUCKET) as usize].insert(flight);
            }
        }
    }
    let (entries, exits) = flows(&p, day_start);
    OracleCounts {
        occupancy: sets.iter().map(|s| s.len() as u32).collect(),
        entries,
        exits,
        skipped,
    }
}

/// Second-by-second replay with a running set of present flights. Gives the
/// same result as [`occupancy_oracle`] in O(seconds + events).
pub fn occupancy_oracle_sweep(events: &[OracleEvent], sector: &str, day_start: i64) -> OracleCounts {
    let (p, skipped) = presences(events, sector, day_start);
    let mut starts: HashMap<i64, Vec<&str>> = HashMap::new();
    let mut ends: HashMap<i64, Vec<&str>> = HashMap::new();
    for (flight, a, b, _) in &p {
        if a < b {
            starts.entry(*a).or_default().push(flight);
            ends.entry(*b).or_default().push(flight);
        }
    }
    let mut present: HashMap<&str, u32> = HashMap::new();
    let mut occupancy = vec![0u32; BUCKETS];
    let mut bucket_set: HashSet<&str> = HashSet::new();
    for s in 0..SECONDS_PER_DAY {
        let t = day_start + s;
        if s % BUCKET == 0 {
            if s > 0 {
                occupancy[(s / BUCKET - 1) as usize] = bucket_set.len() as u32;
            }
            bucket_set.clear();
        }
        if let Some(list) = ends.get(&t) {
            for f in list {
                let c = present.get_mut(f).expect("ending flight is present");
                *c -= 1;
                if *c == 0 {
                    present.remove(f);
                }
            }
        }
        if let Some(list) = starts.get(&t) {
            for f in list {
                *present.entry(f).or_insert(0) += 1;
            }
        }
        if s % BUCKET == 0 {
            bucket_set.extend(present.keys().copied());
        } else if let Some(list) = starts.get(&t) {
            bucket_set.extend(list.iter().copied());
        }
    }
    occupancy[BUCKETS - 1] = bucket_set.len() as u32;
    let (entries, exits) = flows(&p, day_start);
    OracleCounts {
        occupancy,
        entries,
        exits,
        skipped,
    }
}

/// Accuracy score written out term by term: for each index, the mean over
/// its candidate ground truths of `exp(-|c - ŷ| / m)`, with `m` the mean of
/// the primary truths (1 if that mean is 0); the score is the mean of the
/// per-index values. `alt` may be empty (no alternatives anywhere).
pub fn eq1_oracle(y: &[f64], alt: &[Vec<f64>], y_hat: &[f64]) -> f64 {
    let n = y.len();
    let mut total = 0.0;
    for v in y {
        total += v;
    }
    let mut m = total / n as f64;
    if m == 0.0 {
        m = 1.0;
    }
    let mut acc = 0.0;
    for t in 0..n {
        let mut candidates = vec![y[t]];
        if !alt.is_empty() {
            candidates.extend(alt[t].iter().copied());
        }
        let mut s = 0.0;
        for c in &candidates {
            s += (-(c - y_hat[t]).abs() / m).exp();
        }
        acc += s / candidates.len() as f64;
    }
    acc / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOracle {
    pub feature: usize,
    pub threshold: f64,
    /// Sum of squared errors around the two child means.
    pub sse: f64,
}

fn sse(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Exhaustive least-squares split: every feature, every midpoint between
/// consecutive distinct values, both children with at least `min_leaf`
/// rows. Ties keep the lowest feature, then the lowest threshold.
pub fn best_split_oracle(rows: &[Vec<f64>], y: &[f64], min_leaf: usize) -> Option<SplitOracle> {
    let d = rows.first()?.len();
    let mut best: Option<SplitOracle> = None;
    for f in 0..d {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
        values.dedup();
        for w in values.windows(2) {
            let threshold = w[0] + (w[1] - w[0]) / 2.0;
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for (r, &t) in rows.iter().zip(y) {
                if r[f] <= threshold {
                    left.push(t);
                } else {
                    right.push(t);
                }
            }
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let total = sse(&left) + sse(&right);
            if best.is_none_or(|b| total < b.sse) {
                best = Some(SplitOracle {
                    feature: f,
                    threshold,
                    sse: total,
                });
            }
        }
    }
    best
}
