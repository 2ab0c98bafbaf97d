use std::collections::HashMap;
use std::f64::consts::TAU;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::{PipelineError, PreparedSource, Target};
use crate::dataset::Dataset;
use crate::metar::TimedObservation;
use crate::scalar::Scalar;
use crate::store::{Store, StoreError};
use crate::timeutil::{date_of, day_start, weekday_index, DateRange};

pub const FEATURE_NAMES: [&str; 13] = [
    "hour_sin",
    "hour_cos",
    "dow",
    "doy_sin",
    "doy_cos",
    "temp_c",
    "wind_speed_kt",
    "wind_dir_sin",
    "wind_dir_cos",
    "wind_dir_valid",
    "humidity_pct",
    "pressure_hpa",
    "stale",
];

/// Observations older than this mark the feature vector stale.
pub const STALE_AFTER_S: i64 = 2 * 3600;
/// Observations older than this are not used at all.
pub const NO_WEATHER_AFTER_S: i64 = 24 * 3600;

/// Time features of a bucket followed by the weather in force at its start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_NAMES.len()]);

impl FeatureVector {
    /// Features for `bucket_start` from an observation made at `obs.ts`.
    pub fn from_observation(bucket_start: i64, obs: &TimedObservation) -> Self {
        let date = date_of(bucket_start);
        let hour = (bucket_start - day_start(date)) as f64 / 3600.0;
        let days_in_year = if date.leap_year() { 366.0 } else { 365.0 };
        let doy = f64::from(date.ordinal0()) / days_in_year;
        let o = &obs.obs;
        let valid = o.wind_dir_valid();
        let (dir_sin, dir_cos) = if valid {
            f64::from(o.wind_dir_deg()).to_radians().sin_cos()
        } else {
            (0.0, 1.0)
        };
        let (h_sin, h_cos) = (TAU * hour / 24.0).sin_cos();
        let (d_sin, d_cos) = (TAU * doy).sin_cos();
        FeatureVector([
            h_sin,
            h_cos,
            f64::from(weekday_index(date)),
            d_sin,
            d_cos,
            f64::from(o.temp_c),
            f64::from(o.wind_speed_kt),
            dir_sin,
            dir_cos,
            f64::from(u8::from(valid)),
            o.humidity_pct,
            o.pressure_hpa(),
            f64::from(u8::from(bucket_start - obs.ts > STALE_AFTER_S)),
        ])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_stale(&self) -> bool {
        self.0[12] != 0.0
    }

    pub fn cast<T: Scalar>(&self) -> Vec<T> {
        self.0.iter().map(|&v| T::lit(v)).collect()
    }
}

pub fn feature_names() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Weather observations indexed by station, sorted by time.
#[derive(Debug, Clone, Default)]
pub struct WeatherHistory {
    by_station: HashMap<String, Vec<TimedObservation>>,
}

impl WeatherHistory {
    pub fn new(observations: impl IntoIterator<Item = TimedObservation>) -> Self {
        let mut h = Self::default();
        h.extend(observations);
        h
    }

    /// Adds observations; a later observation with the same station and
    /// time replaces the earlier one.
    pub fn extend(&mut self, observations: impl IntoIterator<Item = TimedObservation>) {
        let mut touched = Vec::new();
        for o in observations {
            let list = self.by_station.entry(o.obs.station.clone()).or_default();
            if !touched.contains(&o.obs.station) {
                touched.push(o.obs.station.clone());
            }
            list.push(o);
        }
        for st in touched {
            let list = self.by_station.get_mut(&st).expect("station present");
            list.sort_by_key(|o| o.ts);
            // Keep the last of equal timestamps (stable sort preserves arrival order).
            let mut dedup: Vec<TimedObservation> = Vec::with_capacity(list.len());
            for o in list.drain(..) {
                match dedup.last_mut() {
                    Some(last) if last.ts == o.ts => *last = o,
                    _ => dedup.push(o),
                }
            }
            *list = dedup;
        }
    }

    /// Loads the store's weather for a date range plus the preceding day
    /// (for look-back at the start of the range).
    pub fn from_store(store: &Store, range: DateRange) -> Result<Self, StoreError> {
        let mut obs = Vec::new();
        if let Some(prev) = range.from.pred_opt() {
            obs.extend(store.raw.read_weather(prev)?);
        }
        for d in range.days() {
            obs.extend(store.raw.read_weather(d)?);
        }
        Ok(Self::new(obs))
    }

    /// Latest observation of `station` at or before `ts`.
    pub fn latest(&self, station: &str, ts: i64) -> Option<&TimedObservation> {
        let list = self.by_station.get(station)?;
        let i = list.partition_point(|o| o.ts <= ts);
        i.checked_sub(1).map(|i| &list[i])
    }

    pub fn stations(&self) -> impl Iterator<Item = &str> {
        self.by_station.keys().map(String::as_str)
    }

    pub fn observations(&self, station: &str) -> &[TimedObservation] {
        self.by_station.get(station).map_or(&[], Vec::as_slice)
    }
}

/// Feature vector for a bucket using the latest observation at or before its
/// start. Errors with `NoWeather` when that observation is more than 24 h old
/// or missing.
pub fn build_features(
    bucket_start: i64,
    station: &str,
    weather: &WeatherHistory,
) -> Result<FeatureVector, PipelineError> {
    let no_weather = || PipelineError::NoWeather {
        station: station.to_string(),
        ts: bucket_start,
    };
    let obs = weather.latest(station, bucket_start).ok_or_else(no_weather)?;
    if bucket_start - obs.ts > NO_WEATHER_AFTER_S {
        return Err(no_weather());
    }
    Ok(FeatureVector::from_observation(bucket_start, obs))
}

#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    pub dataset: Dataset<T>,
    /// Bucket start of each row.
    pub bucket_starts: Vec<i64>,
    /// Rows skipped for lack of weather.
    pub excluded: usize,
}

/// One row per bucket per day of `range` for the sector, targets from the
/// chosen count and alternatives from its ambiguity expansion.
pub fn build_training_set<T: Scalar>(
    source: &dyn PreparedSource,
    weather: &WeatherHistory,
    network: &crate::network::Network,
    sector: &str,
    target: Target,
    range: DateRange,
) -> Result<TrainingSet<T>, PipelineError> {
    let station = network
        .station_of(sector)
        .ok_or_else(|| PipelineError::UnknownSector(sector.to_string()))?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut alt_y = Vec::new();
    let mut bucket_starts = Vec::new();
    let mut excluded = 0;
    for date in range.days() {
        let mut day: Vec<_> = source
            .pi_rows(date)?
            .into_iter()
            .filter(|r| r.sector == sector)
            .collect();
        day.sort_by_key(|r| r.bucket_start);
        for r in day {
            match build_features(r.bucket_start, station, weather) {
                Ok(f) => {
                    rows.push(f.cast::<T>());
                    y.push(T::lit(f64::from(target.value(&r))));
                    alt_y.push(
                        target
                            .alternatives(&r)
                            .iter()
                            .map(|&v| T::lit(f64::from(v)))
                            .collect(),
                    );
                    bucket_starts.push(r.bucket_start);
                }
                Err(PipelineError::NoWeather { .. }) => excluded += 1,
                Err(e) => return Err(e),
            }
        }
    }
    if rows.is_empty() {
        return Err(PipelineError::EmptyRange);
    }
    let dataset = Dataset::new(feature_names(), rows, y, alt_y)
        .expect("pipeline rows are aligned and finite");
    Ok(TrainingSet {
        dataset,
        bucket_starts,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metar::parse_metar;
    use crate::timeutil::parse_iso;

    fn obs(iso: &str, text: &str) -> TimedObservation {
        TimedObservation {
            ts: parse_iso(iso).unwrap(),
            obs: parse_metar(text).unwrap(),
        }
    }

    #[test]
    fn quarter_period_hour() {
        let w = WeatherHistory::new([obs("2024-01-01T05:50:00Z", "EDDF 010550Z 24012KT 9999 18/09 Q1015")]);
        let f = build_features(parse_iso("2024-01-01T06:00:00Z").unwrap(), "EDDF", &w).unwrap();
        assert!((f.0[0] - 1.0).abs() < 1e-12);
        assert!(f.0[1].abs() < 1e-12);
        assert!(!f.is_stale());
    }

    #[test]
    fn day_apart_changes_only_calendar() {
        let w = WeatherHistory::new([
            obs("2024-01-01T05:50:00Z", "EDDF 010550Z 24012KT 9999 18/09 Q1015"),
            obs("2024-01-02T05:50:00Z", "EDDF 020550Z 24012KT 9999 18/09 Q1015"),
        ]);
        let a = build_features(parse_iso("2024-01-01T06:00:00Z").unwrap(), "EDDF", &w).unwrap();
        let b = build_features(parse_iso("2024-01-02T06:00:00Z").unwrap(), "EDDF", &w).unwrap();
        assert_eq!(a.0[..2], b.0[..2]);
        assert_ne!(a.0[2], b.0[2]);
        assert_eq!(a.0[5..], b.0[5..]);
    }

    #[test]
    fn staleness_and_no_weather() {
        let w = WeatherHistory::new([obs("2024-01-01T03:00:00Z", "EDDF 010300Z 24012KT 9999 18/09 Q1015")]);
        let f = build_features(parse_iso("2024-01-01T06:00:00Z").unwrap(), "EDDF", &w).unwrap();
        assert!(f.is_stale());
        let f = build_features(parse_iso("2024-01-01T05:00:00Z").unwrap(), "EDDF", &w).unwrap();
        assert!(!f.is_stale());
        assert!(matches!(
            build_features(parse_iso("2024-01-02T03:15:00Z").unwrap(), "EDDF", &w),
            Err(PipelineError::NoWeather { .. })
        ));
        assert!(build_features(parse_iso("2024-01-01T02:00:00Z").unwrap(), "EDDF", &w).is_err());
        assert!(build_features(parse_iso("2024-01-01T04:00:00Z").unwrap(), "EDDM", &w).is_err());
    }

    #[test]
    fn variable_wind_direction_features() {
        let w = WeatherHistory::new([obs("2024-01-01T00:00:00Z", "EDDF 010000Z VRB02KT 9999 10/05 Q1015")]);
        let f = build_features(parse_iso("2024-01-01T00:00:00Z").unwrap(), "EDDF", &w).unwrap();
        assert_eq!((f.0[7], f.0[8], f.0[9]), (0.0, 1.0, 0.0));
        for pair in [(0, 1), (3, 4), (7, 8)] {
            let n = f.0[pair.0].hypot(f.0[pair.1]);
            assert!((n - 1.0).abs() < 1e-9);
        }
    }
}
