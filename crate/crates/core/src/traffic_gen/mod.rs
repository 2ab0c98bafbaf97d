//! Deterministic synthetic traffic and weather.
//!
//! Every (scenario, date) pair is generated independently from RNG streams
//! keyed by the scenario seed, the date and the sector or station, so days
//! can be produced in any order or in parallel with identical output.

mod scenario;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scenario::{
    AirportModel, Overnight, Scenario, SectorModel, StationModel, Transit, MAX_AMBIGUITY_RATE,
};

use crate::metar::{parse_metar, TimedObservation};
use crate::store::{self, Candidate, EventKind, FlightEvent, StoreError};
use crate::timeutil::{day_start, weekday_index, BUCKETS_PER_DAY, BUCKET_SECONDS, DAY_SECONDS};

/// Weather reports are generated at this cadence, starting at 00:00.
pub const WEATHER_INTERVAL_S: i64 = 1800;
pub const WEATHER_PER_DAY: usize = (DAY_SECONDS / WEATHER_INTERVAL_S) as usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("date {0} is outside the scenario's validity")]
    OutOfRange(NaiveDate),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A runway-configuration label observed at a weather report time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RcLabel {
    pub airport: String,
    pub ts: i64,
    pub config: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDay {
    pub date: NaiveDate,
    /// Ordered by timestamp; `source_seq` numbers follow that order.
    pub events: Vec<FlightEvent>,
    /// Ordered by (time, station).
    pub weather: Vec<TimedObservation>,
    pub rc_labels: Vec<RcLabel>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent RNG stream for one (seed, date, purpose, index).
fn stream(seed: u64, date: NaiveDate, purpose: u64, index: usize) -> ChaCha8Rng {
    let mut s = splitmix(seed);
    s = splitmix(s ^ date.num_days_from_ce() as u64);
    s = splitmix(s ^ purpose);
    s = splitmix(s ^ index as u64);
    ChaCha8Rng::seed_from_u64(s)
}

const STREAM_WEATHER: u64 = 1;
const STREAM_TRAFFIC: u64 = 2;
const STREAM_AIRPORT: u64 = 3;

fn temp_group(v: i32) -> String {
    if v < 0 {
        format!("M{:02}", -v)
    } else {
        format!("{v:02}")
    }
}

/// One station-day of AR(1) weather at 30-minute cadence, as decoded METAR
/// reports (the reports are encoded and parsed back, so the stored
/// observation is exactly what a reader of the text would obtain).
fn station_day(scn: &Scenario, st: &StationModel, date: NaiveDate, index: usize) -> Vec<TimedObservation> {
    let mut rng = stream(scn.seed, date, STREAM_WEATHER, index);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let innov = (1.0 - st.ar * st.ar).sqrt();
    // Stationary start, then AR(1) steps.
    let mut t_dev = st.temp_sigma_c * unit.sample(&mut rng);
    let mut w_dev = st.wind_sigma_kt * unit.sample(&mut rng);
    let mut p_dev = st.pressure_sigma_hpa * unit.sample(&mut rng);
    let mut s_dev = 1.5 * unit.sample(&mut rng);
    let mut dir: f64 = rng.random_range(0.0..360.0);
    let start = day_start(date);
    let mut out = Vec::with_capacity(WEATHER_PER_DAY);
    for k in 0..WEATHER_PER_DAY {
        if k > 0 {
            t_dev = st.ar * t_dev + innov * st.temp_sigma_c * unit.sample(&mut rng);
            w_dev = st.ar * w_dev + innov * st.wind_sigma_kt * unit.sample(&mut rng);
            p_dev = st.ar * p_dev + innov * st.pressure_sigma_hpa * unit.sample(&mut rng);
            s_dev = st.ar * s_dev + innov * 1.5 * unit.sample(&mut rng);
            dir = (dir + st.dir_step_deg * unit.sample(&mut rng)).rem_euclid(360.0);
        }
        let ts = start + k as i64 * WEATHER_INTERVAL_S;
        let hour = k as f64 * WEATHER_INTERVAL_S as f64 / 3600.0;
        let temp = st.temp_mean_c
            + st.temp_diurnal_c * (std::f64::consts::TAU * (hour - 9.0) / 24.0).sin()
            + t_dev;
        let temp = (temp.round() as i32).clamp(-50, 50);
        let spread = (st.dew_spread_c + s_dev).max(0.0).round() as i32;
        let dew = (temp - spread).max(-55);
        let speed = (st.wind_mean_kt + w_dev).max(0.0).round() as u32;
        let wind = match speed {
            0 => "00000KT".to_string(),
            1 | 2 => format!("VRB{speed:02}KT"),
            s => {
                let d = ((dir / 10.0).round() as u32 * 10) % 360;
                format!("{d:03}{s:02}KT")
            }
        };
        let vis = if temp - dew <= 1 { "4000" } else { "9999" };
        let pressure = (st.pressure_mean_hpa + p_dev).round().clamp(900.0, 1080.0) as u32;
        let text = format!(
            "{} {:02}{:02}{:02}Z {} {} {}/{} Q{:04}",
            st.id,
            date.day(),
            k / 2,
            (k % 2) * 30,
            wind,
            vis,
            temp_group(temp),
            temp_group(dew),
            pressure
        );
        let obs = parse_metar(&text).expect("generated report is well-formed");
        out.push(TimedObservation { ts, obs });
    }
    out
}

struct SectorTraffic {
    intervals: Vec<(String, i64, Option<i64>)>,
    events: Vec<FlightEvent>,
}

fn sector_day(
    scn: &Scenario,
    sector: &SectorModel,
    index: usize,
    date: NaiveDate,
    weather: &[TimedObservation],
    group_base: u64,
) -> SectorTraffic {
    let mut rng = stream(scn.seed, date, STREAM_TRAFFIC, index);
    let transit = LogNormal::new((scn.transit.median_min * 60.0).ln(), scn.transit.sigma_log)
        .expect("valid lognormal");
    let start = day_start(date);
    let end = start + DAY_SECONDS;
    let dow = weekday_index(date) as usize;
    let mut intervals = Vec::new();
    let mut events = Vec::new();
    let mut n = 0u32;
    let mut groups = 0u64;
    for b in 0..BUCKETS_PER_DAY {
        let bucket = start + b as i64 * BUCKET_SECONDS;
        let wind = weather
            .iter()
            .rev()
            .find(|o| o.ts <= bucket)
            .map_or(0.0, |o| f64::from(o.obs.wind_speed_kt));
        let hour = (bucket - start) as f64 / 3600.0;
        let lambda = sector.rate(hour, dow, wind) * BUCKET_SECONDS as f64 / 3600.0;
        let count = if lambda > 0.0 {
            Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u32
        } else {
            0
        };
        for _ in 0..count {
            let entry = bucket + rng.random_range(0..BUCKET_SECONDS);
            let dur = (transit.sample(&mut rng).round() as i64).max(30);
            let exit = entry + dur;
            let ambiguous = rng.random::<f64>() < scn.ambiguity_rate;
            let three = rng.random::<bool>();
            let shift1 = rng.random_range(30..=300).min(dur / 3);
            let shift2 = rng.random_range(30..=300).min(dur / 3);
            if exit >= end && scn.overnight == Overnight::Drop {
                continue;
            }
            let fid = format!("{}-{}-{n:05}", sector.id, date.format("%Y%m%d"));
            n += 1;
            let mut entry_ev = FlightEvent::new(fid.clone(), EventKind::SectorEntry, &sector.id, entry);
            if exit >= end {
                events.push(entry_ev);
                intervals.push((fid, entry, None));
                continue;
            }
            let mut exit_ev = FlightEvent::new(fid.clone(), EventKind::SectorExit, &sector.id, exit);
            if ambiguous && shift1 > 0 {
                let group = group_base + groups;
                groups += 1;
                let mut ec = vec![Candidate(entry, 0), Candidate(entry + shift1, 1)];
                let mut xc = vec![Candidate(exit, 0), Candidate(exit, 1)];
                if three {
                    ec.push(Candidate(entry, 2));
                    xc.push(Candidate(exit - shift2, 2));
                }
                entry_ev = entry_ev.with_ambiguity(group, ec);
                exit_ev = exit_ev.with_ambiguity(group, xc);
            }
            events.push(entry_ev);
            events.push(exit_ev);
            intervals.push((fid, entry, Some(exit)));
        }
    }
    SectorTraffic { intervals, events }
}

/// Generates one day of events, weather and runway-configuration labels.
pub fn generate_day(scn: &Scenario, date: NaiveDate) -> Result<GeneratedDay, GenError> {
    scn.validate()?;
    if !scn.covers(date) {
        return Err(GenError::OutOfRange(date));
    }
    let start = day_start(date);
    let end = start + DAY_SECONDS;

    let per_station: Vec<Vec<TimedObservation>> = scn
        .stations
        .iter()
        .enumerate()
        .map(|(i, st)| station_day(scn, st, date, i))
        .collect();
    let station_weather = |id: &str| -> &[TimedObservation] {
        scn.stations
            .iter()
            .position(|s| s.id == id)
            .map_or(&[][..], |i| &per_station[i])
    };

    let date_key = u64::from(date.year().unsigned_abs()) * 10_000
        + u64::from(date.month()) * 100
        + u64::from(date.day());
    let mut events = Vec::new();
    let mut sector_traffic = Vec::with_capacity(scn.sectors.len());
    for (i, sector) in scn.sectors.iter().enumerate() {
        let group_base = (date_key * 100 + i as u64) * 100_000;
        let t = sector_day(scn, sector, i, date, station_weather(&sector.station), group_base);
        events.extend(t.events.iter().cloned());
        sector_traffic.push(t);
    }

    let mut rc_labels = Vec::new();
    for (ai, airport) in scn.airports.iter().enumerate() {
        let weather = station_weather(&airport.station);
        let rc_at = |ts: i64| -> &str {
            match weather.iter().rev().find(|o| o.ts <= ts) {
                Some(o) => airport.rc_for_wind(o.obs.wind_dir_deg()),
                None => &airport.default_rc,
            }
        };
        for o in weather {
            rc_labels.push(RcLabel {
                airport: airport.id.clone(),
                ts: o.ts,
                config: rc_at(o.ts).to_string(),
            });
        }
        let topo = airport.topology();
        let mut rng = stream(scn.seed, date, STREAM_AIRPORT, ai);
        for (si, sector) in scn.sectors.iter().enumerate() {
            for (fid, entry, exit) in &sector_traffic[si].intervals {
                if let Some(exit) = *exit {
                    if topo.arrival_sectors(rc_at(exit)).contains(&sector.id) {
                        let delay = i64::from(rng.random_range(
                            airport.arrival_delay_s[0]..=airport.arrival_delay_s[1],
                        ));
                        if exit + delay < end {
                            events.push(FlightEvent::new(fid, EventKind::Arrival, &airport.id, exit + delay));
                        }
                    }
                }
                if topo.departure_sectors(rc_at(*entry)).contains(&sector.id) {
                    let lead = i64::from(rng.random_range(
                        airport.departure_lead_s[0]..=airport.departure_lead_s[1],
                    ));
                    if entry - lead >= start {
                        events.push(FlightEvent::new(fid, EventKind::Departure, &airport.id, entry - lead));
                    }
                }
            }
        }
    }

    events.sort_by(|a, b| {
        (a.timestamp, &a.flight_id, a.kind, &a.resource_id).cmp(&(
            b.timestamp,
            &b.flight_id,
            b.kind,
            &b.resource_id,
        ))
    });
    for (i, e) in events.iter_mut().enumerate() {
        e.source_seq = i as u64;
    }
    let mut weather: Vec<TimedObservation> = per_station.into_iter().flatten().collect();
    weather.sort_by(|a, b| (a.ts, &a.obs.station).cmp(&(b.ts, &b.obs.station)));
    Ok(GeneratedDay {
        date,
        events,
        weather,
        rc_labels,
    })
}

/// METAR text for a day's weather with its `#CONTEXT` header.
pub fn metar_text(day: &GeneratedDay) -> String {
    let mut out = format!("#CONTEXT year={} month={:02}\n", day.date.year(), day.date.month());
    for o in &day.weather {
        let _ = writeln!(out, "{}", o.obs.raw);
    }
    out
}

pub fn events_file_name(date: NaiveDate) -> String {
    store::raw::segment_name(date)
}

pub fn metar_file_name(date: NaiveDate) -> String {
    format!("metar-{}.txt", date.format("%Y%m%d"))
}

pub fn rc_file_name(date: NaiveDate) -> String {
    format!("rc-{}.jsonl", date.format("%Y%m%d"))
}

/// Writes `events-YYYYMMDD.jsonl`, `metar-YYYYMMDD.txt` and
/// `rc-YYYYMMDD.jsonl` into `dir`, returning the paths written.
pub fn write_day(dir: &Path, day: &GeneratedDay) -> Result<Vec<PathBuf>, GenError> {
    fs::create_dir_all(dir).map_err(|e| store::io_err(dir, e))?;
    let events = dir.join(events_file_name(day.date));
    store::write_event_file(&events, &day.events)?;
    let metar = dir.join(metar_file_name(day.date));
    fs::write(&metar, metar_text(day)).map_err(|e| store::io_err(&metar, e))?;
    let rc = dir.join(rc_file_name(day.date));
    let mut text = String::new();
    for l in &day.rc_labels {
        text.push_str(&serde_json::to_string(l).expect("label serializes"));
        text.push('\n');
    }
    fs::write(&rc, text).map_err(|e| store::io_err(&rc, e))?;
    Ok(vec![events, metar, rc])
}

/// Events of an interchange file, in file order.
pub fn replay(path: &Path) -> Result<Vec<FlightEvent>, StoreError> {
    store::read_event_file(path)
}
