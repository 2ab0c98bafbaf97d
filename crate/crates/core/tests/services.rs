use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use aeroflow_core::airport_service::{cross_validate_rc, AirportError};
use aeroflow_core::eval::CvConfig;
use aeroflow_core::metar::{parse_metar, TimedObservation, WeatherObservation};
use aeroflow_core::ml::Hyper;
use aeroflow_core::network::{
    ActiveRunway, AirportTopology, Network, Runway, RunwayConfig, RunwayMode, SectorInfo, StaticCapacity,
};
use aeroflow_core::pipeline::{prepare_day, Target, WeatherHistory};
use aeroflow_core::store::{Store, StoreConfig};
use aeroflow_core::timeutil::{day_start, DateRange};
use aeroflow_core::traffic_gen::{generate_day, Scenario};
use aeroflow_core::{AirportService, SectorService};
use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn obs(raw: &str) -> WeatherObservation {
    parse_metar(raw).unwrap()
}

fn timed(ts: i64, raw: &str) -> TimedObservation {
    TimedObservation { ts, obs: obs(raw) }
}

fn pick(rng: &mut ChaCha8Rng, from: &[String]) -> Vec<String> {
    let n = rng.random_range(0..=3);
    from.choose_multiple(rng, n).cloned().collect()
}

fn random_network(rng: &mut ChaCha8Rng) -> Network {
    let sectors: Vec<String> = (0..rng.random_range(2..8)).map(|i| format!("S{i}")).collect();
    let mut runways = Vec::new();
    for r in 0..rng.random_range(1..4) {
        let arrival_sectors = pick(rng, &sectors);
        let departure_sectors = pick(rng, &sectors);
        runways.push(Runway { id: format!("R{r}"), arrival_sectors, departure_sectors });
    }
    let modes = [RunwayMode::Arrivals, RunwayMode::Departures, RunwayMode::Both];
    let mut configs = Vec::new();
    for c in 0..rng.random_range(1..4) {
        let mut active = Vec::new();
        for r in &runways {
            if rng.random_bool(0.7) {
                let mode = *modes.choose(rng).unwrap();
                active.push(ActiveRunway { runway: r.id.clone(), mode });
            }
        }
        configs.push(RunwayConfig { id: format!("C{c}"), runways: active });
    }
    let static_capacity = configs
        .iter()
        .map(|c| (c.id.clone(), StaticCapacity { arrivals: 9.0, departures: 8.0 }))
        .collect();
    Network {
        sectors: sectors.iter().map(|s| SectorInfo { id: s.clone(), station: "EDDF".into() }).collect(),
        airports: vec![AirportTopology {
            id: "AP".into(),
            station: "EDDF".into(),
            default_rc: configs[0].id.clone(),
            runways,
            configs,
            static_capacity,
        }],
    }
}

/// Independent restatement of the composition rule: union the sectors of
/// the active runways per direction, then add their predictions.
fn expected_sum(topo: &AirportTopology, rc: &str, arrivals: bool, preds: &HashMap<(String, Target), f64>) -> f64 {
    let cfg = topo.configs.iter().find(|c| c.id == rc).unwrap();
    let mut set = BTreeSet::new();
    for a in &cfg.runways {
        let r = topo.runways.iter().find(|r| r.id == a.runway).unwrap();
        match (arrivals, a.mode) {
            (true, RunwayMode::Arrivals | RunwayMode::Both) => set.extend(r.arrival_sectors.iter().cloned()),
            (false, RunwayMode::Departures | RunwayMode::Both) => set.extend(r.departure_sectors.iter().cloned()),
            _ => {}
        }
    }
    let target = if arrivals { Target::Exits } else { Target::Entries };
    set.iter().fold(0.0, |acc, s| acc + preds[&(s.clone(), target)])
}

#[test]
fn capacity_is_the_exact_sum_of_sector_predictions() {
    let w = timed(0, "EDDF 010000Z 27010KT 9999 10/05 Q1010");
    for case in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let net = random_network(&mut rng);
        let mut preds = HashMap::new();
        for s in net.sector_ids() {
            for t in [Target::Entries, Target::Exits] {
                preds.insert((s.clone(), t), rng.random_range(0.0..20.0));
            }
        }
        let topo = net.airports[0].clone();
        let svc = AirportService::new(net);
        let p = svc.predict_capacity("AP", 900, &w, &preds).unwrap();
        assert!(!p.degraded);
        assert_eq!(p.rc, topo.default_rc);
        let a = expected_sum(&topo, &p.rc, true, &preds);
        let d = expected_sum(&topo, &p.rc, false, &preds);
        assert_eq!(p.arrivals.to_bits(), a.to_bits(), "case {case}");
        assert_eq!(p.departures.to_bits(), d.to_bits(), "case {case}");
    }
}

#[test]
fn missing_sector_predictions_fall_back_to_the_static_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = loop {
        let n = random_network(&mut rng);
        let t = &n.airports[0];
        if !t.arrival_sectors(&t.default_rc).is_empty() {
            break n;
        }
    };
    let svc = AirportService::new(net);
    let w = timed(0, "EDDF 010000Z 27010KT 9999 10/05 Q1010");
    let empty: HashMap<(String, Target), f64> = HashMap::new();
    let p = svc.predict_capacity("AP", 900, &w, &empty).unwrap();
    assert!(p.degraded);
    assert_eq!((p.arrivals, p.departures), (9.0, 8.0));
    // No weather at all: still an answer, from the default configuration.
    let p = svc.predict_capacity_at("AP", 900, &WeatherHistory::default(), &empty).unwrap();
    assert!(p.degraded);
    assert!(matches!(svc.predict_capacity("XX", 0, &w, &empty), Err(AirportError::NoTopology(_))));
}

fn small_store(days: u32) -> (tempfile::TempDir, Store, DateRange) {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path(), StoreConfig::default()).unwrap();
    let scn = Scenario::reference();
    let network = scn.network();
    store.save_network(&network).unwrap();
    let from = NaiveDate::from_ymd_opt(2024, 5, 6).unwrap();
    let range = DateRange::new(from, from + chrono::Days::new(u64::from(days) - 1)).unwrap();
    for d in range.days() {
        let g = generate_day(&scn, d).unwrap();
        store.raw.append_batch(&g.events).unwrap();
        store.raw.append_weather(&g.weather).unwrap();
        prepare_day(&store, &network, d).unwrap();
    }
    (dir, store, range)
}

#[test]
fn published_models_reload_with_identical_predictions() {
    let (_dir, store, range) = small_store(3);
    let network = store.load_network().unwrap();
    let svc = SectorService::new(network.clone())
        .with_candidates(vec![Hyper::Mean, Hyper::Ridge { lambda: 1.0 }, Hyper::Knn { k: 5 }]);
    let trained = svc.train_sector(&store, "ARR1", Target::Occupancy, range).unwrap();
    assert!(trained.model_id.is_some());

    let fresh = SectorService::new(network);
    assert_eq!(fresh.load_published(&store.models).unwrap(), 1);
    let loaded = fresh.predictor("ARR1", Target::Occupancy).unwrap();
    assert_eq!(loaded.model_id, trained.model_id);
    assert_eq!(loaded.cv_score, trained.cv_score);
    let weather = WeatherHistory::from_store(&store, range).unwrap();
    let from = day_start(range.from);
    let a = svc.predict_horizon("ARR1", Target::Occupancy, from, from + 86_400, &weather).unwrap();
    let b = fresh.predict_horizon("ARR1", Target::Occupancy, from, from + 86_400, &weather).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 96);
    assert!(svc.predict_horizon("ARR1", Target::Occupancy, from + 1, from + 900, &weather).is_err());
}

/// Readers see whole snapshots: a predictor's version never goes backwards
/// while a writer keeps swapping in new ones.
#[test]
fn predictor_swaps_are_atomic_for_readers() {
    let (_dir, store, range) = small_store(2);
    let network = store.load_network().unwrap();
    let svc = Arc::new(SectorService::new(network).with_candidates(vec![Hyper::Mean]));
    let weather = WeatherHistory::from_store(&store, range).unwrap();
    let base = svc.train(&store.prepared, &weather, "ARR1", Target::Occupancy, range, None).unwrap();
    let done = Arc::new(AtomicBool::new(false));
    let readers: Vec<_> = (0..4)
        .map(|_| {
            let svc = svc.clone();
            let done = done.clone();
            std::thread::spawn(move || {
                let mut last = 0;
                let mut reads = 0u64;
                while !done.load(Ordering::SeqCst) || reads == 0 {
                    let p = svc.predictor("ARR1", Target::Occupancy).unwrap();
                    assert!(p.version >= last);
                    last = p.version;
                    reads += 1;
                }
                last
            })
        })
        .collect();
    for _ in 0..500 {
        svc.install((*base).clone());
    }
    done.store(true, Ordering::SeqCst);
    for r in readers {
        assert!(r.join().unwrap() <= 501);
    }
    assert_eq!(svc.predictor("ARR1", Target::Occupancy).unwrap().version, 501);
}

#[test]
fn rc_classifier_learns_the_wind_rule() {
    let scn = Scenario::reference();
    let net = scn.network();
    let ap = &scn.airports[0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let history: Vec<(WeatherObservation, String)> = (0..400)
        .map(|_| {
            let dir = rng.random_range(0..36u16) * 10;
            let spd = rng.random_range(3..30u16);
            let o = obs(&format!("{} 010000Z {dir:03}{spd:02}KT 9999 10/05 Q1013", ap.station));
            (o, ap.rc_for_wind(dir).to_string())
        })
        .collect();
    let svc = AirportService::new(net);
    svc.train_rc_classifier(&ap.id, &history, None).unwrap();
    let acc = cross_validate_rc::<f64>(&history, &CvConfig::default()).unwrap();
    assert!(acc >= 0.95, "accuracy {acc}");
    assert_eq!(svc.predict_rc(&ap.id, &obs("EDDF 010000Z 27015KT 9999 10/05 Q1013")).unwrap(), ap.rc_for_wind(270));
    assert_eq!(svc.predict_rc(&ap.id, &obs("EDDF 010000Z 09015KT 9999 10/05 Q1013")).unwrap(), ap.rc_for_wind(90));

    let few = &history[..10];
    assert!(matches!(
        svc.train_rc_classifier(&ap.id, few, None),
        Err(AirportError::InsufficientData { got: 10, .. })
    ));
    let labels: BTreeMap<_, _> = history.iter().map(|(_, l)| (l.clone(), ())).collect();
    assert_eq!(labels.len(), 2);
}
