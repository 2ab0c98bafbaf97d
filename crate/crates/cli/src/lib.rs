//! Command implementations behind the `aeroflow` binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;

use aeroflow_core::airport_service::{
    cross_validate_rc, rc_history_from_store, required_sector_targets, AirportEvaluation,
};
use aeroflow_core::eval::{
    score_histogram, score_scatter, write_histogram_csv, write_scatter_csv, CvConfig, SectorResult,
};
use aeroflow_core::metar::parse_metar_file;
use aeroflow_core::pipeline::{prepare_day, Target, WeatherHistory};
use aeroflow_core::store::raw::RC_PREFIX;
use aeroflow_core::store::{read_event_file, PrepReport, Store, StoreConfig};
use aeroflow_core::timeutil::DateRange;
use aeroflow_core::traffic_gen::{generate_day, write_day, RcLabel, Scenario};
use aeroflow_core::{AirportService, SectorService};

pub const STORE_ENV: &str = "AF_STORE_DIR";
pub const DEFAULT_STORE: &str = "aeroflow-store";
pub const HISTOGRAM_BINS: usize = 20;

/// `AF_STORE_DIR` when set, else the given path, else `./aeroflow-store`.
pub fn store_location(flag: Option<PathBuf>) -> PathBuf {
    match std::env::var_os(STORE_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag.unwrap_or_else(|| PathBuf::from(DEFAULT_STORE)),
    }
}

pub fn open_store(path: &Path) -> Result<Store> {
    Store::open(path, StoreConfig::default()).with_context(|| format!("opening store {}", path.display()))
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub events: usize,
    pub duplicates: usize,
    pub observations: usize,
    pub metar_errors: usize,
    pub rc_labels: usize,
    pub networks: usize,
}

/// Loads generator output and scenario files into the raw store:
/// `*.toml` scenarios (network), `metar-*.txt` / `*.txt` METAR files,
/// `rc-*.jsonl` runway-configuration labels and any other `*.jsonl` as
/// flight events.
pub fn ingest(store: &Store, files: &[PathBuf]) -> Result<IngestSummary> {
    let mut s = IngestSummary::default();
    for path in files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let text = || fs::read_to_string(path).with_context(|| format!("reading {}", path.display()));
        if name.ends_with(".toml") {
            let scn = Scenario::from_toml(&text()?).with_context(|| format!("scenario {}", path.display()))?;
            store.save_network(&scn.network())?;
            s.networks += 1;
        } else if name.ends_with(".txt") {
            let mut obs = Vec::new();
            for r in parse_metar_file(&text()?) {
                match r {
                    Ok(o) => obs.push(o),
                    Err(e) => {
                        s.metar_errors += 1;
                        tracing::warn!(file = %path.display(), "{e}");
                    }
                }
            }
            s.observations += obs.len();
            store.raw.append_weather(&obs)?;
        } else if name.starts_with("rc-") && name.ends_with(".jsonl") {
            let labels = text()?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| {
                    serde_json::from_str::<RcLabel>(l)
                        .with_context(|| format!("{}:{}", path.display(), i + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            s.rc_labels += labels.len();
            store.raw.append_records(RC_PREFIX, &labels, |l| l.ts)?;
        } else if name.ends_with(".jsonl") {
            let events = read_event_file(path)?;
            let receipts = store.raw.append_batch(&events)?;
            s.duplicates += receipts.iter().filter(|r| r.duplicate).count();
            s.events += receipts.len();
        } else {
            bail!("don't know how to ingest {}", path.display());
        }
    }
    Ok(s)
}

/// Reduces each day of `range` into the prepared store.
pub fn prepare(store: &Store, range: DateRange) -> Result<Vec<PrepReport>> {
    let network = store.load_network()?;
    range
        .days()
        .map(|d| prepare_day(store, &network, d).with_context(|| format!("preparing {d}")))
        .collect()
}

pub fn train_sector(store: &Store, sector: &str, target: Target, range: DateRange) -> Result<(String, f64)> {
    let svc = SectorService::new(store.load_network()?);
    let p = svc.train_sector(store, sector, target, range)?;
    Ok((p.model_id.clone().unwrap_or_default(), p.cv_score))
}

#[derive(Debug, Clone)]
pub struct AirportTraining {
    pub classifier_id: String,
    pub classifier_accuracy: f64,
    /// (sector, target, model id, cv score).
    pub sectors: Vec<(String, Target, String, f64)>,
}

/// Trains the configuration classifier and every sector flow model the
/// airport draws on.
pub fn train_airport(store: &Store, airport: &str, range: DateRange) -> Result<AirportTraining> {
    let network = store.load_network()?;
    let topo = network
        .airport(airport)
        .with_context(|| format!("unknown airport {airport}"))?
        .clone();
    let airports = AirportService::new(network.clone());
    let history = rc_history_from_store(store, &network, airport, range)?;
    let c = airports.train_rc_classifier(airport, &history, Some(&store.models))?;
    let accuracy = cross_validate_rc::<f64>(&history, &CvConfig::default())?;
    let svc = SectorService::new(network);
    let mut sectors = Vec::new();
    for (s, t) in required_sector_targets(&topo) {
        let p = svc.train_sector(store, &s, t, range)?;
        sectors.push((s, t, p.model_id.clone().unwrap_or_default(), p.cv_score));
    }
    Ok(AirportTraining {
        classifier_id: c.model_id.clone().unwrap_or_default(),
        classifier_accuracy: accuracy,
        sectors,
    })
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub airports: Vec<(String, f64, f64, usize)>,
    pub sectors: Vec<SectorResult>,
    pub files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_airport_files(ev: &AirportEvaluation<f64>, dir: &Path, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let ts = dir.join("airport_timeseries.csv");
    let mut w = create(&ts)?;
    ev.write_timeseries_csv(&mut w)?;
    w.flush()?;
    files.push(ts);
    for (name, scores) in [
        ("arrival_score_histogram.csv", ev.daily_arrival_scores()),
        ("departure_score_histogram.csv", ev.daily_departure_scores()),
    ] {
        let h = score_histogram(&scores, HISTOGRAM_BINS)?;
        let p = dir.join(name);
        let mut w = create(&p)?;
        write_histogram_csv(&h, &mut w)?;
        w.flush()?;
        files.push(p);
    }
    Ok(())
}

/// Evaluates published models on `range`: per airport a time series of
/// actual vs predicted movements and daily-score histograms; per sector
/// with an occupancy model, its raw and balanced scores (scatter data).
/// A single airport writes into `out`; several get one subdirectory each.
pub fn evaluate(store: &Store, range: DateRange, out: &Path) -> Result<EvaluateSummary> {
    fs::create_dir_all(out)?;
    let network = store.load_network()?;
    let sectors = SectorService::new(network.clone());
    sectors.load_published(&store.models)?;
    let airports = AirportService::new(network.clone());
    airports.load_published(&store.models)?;
    let weather = WeatherHistory::from_store(store, range)?;
    let mut summary = EvaluateSummary {
        airports: Vec::new(),
        sectors: Vec::new(),
        files: Vec::new(),
    };
    let several = network.airports.len() > 1;
    for id in network.airport_ids() {
        let ev = airports.evaluate_airport(&id, range, &store.prepared, &weather, &sectors)?;
        let dir = if several { out.join(&id) } else { out.to_path_buf() };
        write_airport_files(&ev, &dir, &mut summary.files)?;
        summary
            .airports
            .push((id, ev.arrival_score, ev.departure_score, ev.rows.len()));
    }
    for s in network.sector_ids() {
        if sectors.predictor(&s, Target::Occupancy).is_some() {
            summary.sectors.push(sectors.evaluate_sector(
                &store.prepared,
                &weather,
                &s,
                Target::Occupancy,
                range,
            )?);
        }
    }
    if !summary.sectors.is_empty() {
        let p = out.join("sector_scores.csv");
        let mut w = create(&p)?;
        write_scatter_csv(&score_scatter(&summary.sectors), &mut w)?;
        w.flush()?;
        summary.files.push(p);
    }
    Ok(summary)
}

/// Figure data over every prepared day (or `range`): the score-vs-traffic
/// scatter and the airport score histograms.
pub fn plot(store: &Store, range: Option<DateRange>, out: &Path) -> Result<EvaluateSummary> {
    let range = match range {
        Some(r) => r,
        None => {
            let days: Vec<NaiveDate> = store
                .raw
                .days()?
                .into_iter()
                .filter(|d| store.prepared.is_prepared(*d))
                .collect();
            match (days.first(), days.last()) {
                (Some(a), Some(b)) => DateRange::new(*a, *b).expect("sorted days"),
                _ => bail!("no prepared days in the store"),
            }
        }
    };
    let summary = evaluate(store, range, out)?;
    Ok(summary)
}

/// Writes generator output for every day of `range` into `out`, plus the
/// scenario itself as `scenario.toml`.
pub fn simulate(scenario: &Scenario, range: DateRange, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let mut scn = scenario.clone();
    if let Some(seed) = seed {
        scn.seed = seed;
    }
    fs::create_dir_all(out)?;
    let scn_path = out.join("scenario.toml");
    fs::write(&scn_path, scn.to_toml())?;
    let mut files = vec![scn_path];
    for d in range.days() {
        let day = generate_day(&scn, d)?;
        files.extend(write_day(out, &day)?);
    }
    Ok(files)
}
