//! Airport capacity service: weather → runway configuration → sum of the
//! flow predictions of the sectors feeding the active runways.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::{Arc, RwLock};

use serde::Serialize;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::eval::{kfold_split, score, CvConfig, EvalError};
use crate::metar::{TimedObservation, WeatherObservation};
use crate::ml::{train_classifier, LogisticHyper, ModelError, TrainedModel};
use crate::network::{AirportTopology, Network};
use crate::pipeline::{PipelineError, PreparedSource, Target, WeatherHistory};
use crate::scalar::Scalar;
use crate::sector_service::SectorService;
use crate::store::raw::RC_PREFIX;
use crate::store::{ModelStore, Store, StoreError};
use crate::timeutil::{day_buckets, format_iso, DateRange};
use crate::traffic_gen::RcLabel;

pub const RC_FEATURE_NAMES: [&str; 5] = [
    "wind_dir_sin",
    "wind_dir_cos",
    "wind_speed_kt",
    "visibility_m",
    "pressure_hpa",
];

/// Fewest labelled observations accepted for classifier training.
pub const MIN_RC_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AirportError {
    #[error("no topology for airport {0}")]
    NoTopology(String),
    #[error("no runway-configuration classifier for airport {0}")]
    NoClassifier(String),
    #[error("insufficient data: {got} samples, need at least {need}")]
    InsufficientData { got: usize, need: usize },
    #[error("label `{label}` is not a configuration of airport {airport}")]
    UnknownConfig { airport: String, label: String },
    #[error("empty range")]
    EmptyRange,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Source of sector flow predictions consumed by the airport service.
pub trait SectorPredictions<T>: Send + Sync {
    fn predict(
        &self,
        sector: &str,
        target: Target,
        bucket_start: i64,
        weather: &TimedObservation,
    ) -> Result<T, String>;
}

impl<T: Scalar> SectorPredictions<T> for SectorService<T> {
    fn predict(
        &self,
        sector: &str,
        target: Target,
        bucket_start: i64,
        weather: &TimedObservation,
    ) -> Result<T, String> {
        self.predict_sector(sector, target, bucket_start, weather)
            .map_err(|e| e.to_string())
    }
}

/// Fixed per-sector values; unknown sectors fail. Handy for tests and for
/// withholding a dependency.
impl<T: Scalar> SectorPredictions<T> for HashMap<(String, Target), T> {
    fn predict(&self, sector: &str, target: Target, _: i64, _: &TimedObservation) -> Result<T, String> {
        self.get(&(sector.to_string(), target))
            .copied()
            .ok_or_else(|| format!("no prediction for {sector} ({target})"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityPrediction<T> {
    pub airport_id: String,
    pub bucket_start: i64,
    pub arrivals: T,
    pub departures: T,
    pub rc: String,
    pub degraded: bool,
    #[serde(skip)]
    pub contributing_sectors: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RcClassifier<T> {
    pub airport_id: String,
    pub model: Arc<TrainedModel<T>>,
    pub model_id: Option<String>,
    /// Trained on a single label: always predicts it.
    pub single_class: bool,
}

pub fn rc_features<T: Scalar>(obs: &WeatherObservation) -> Vec<T> {
    let (s, c) = if obs.wind_dir_valid() {
        f64::from(obs.wind_dir_deg()).to_radians().sin_cos()
    } else {
        (0.0, 1.0)
    };
    [
        s,
        c,
        f64::from(obs.wind_speed_kt),
        f64::from(obs.visibility_m),
        obs.pressure_hpa(),
    ]
    .into_iter()
    .map(T::lit)
    .collect()
}

pub struct AirportService<T> {
    network: Network,
    classifiers: RwLock<Arc<HashMap<String, Arc<RcClassifier<T>>>>>,
}

impl<T: Scalar> AirportService<T> {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            classifiers: RwLock::new(Arc::new(HashMap::new())),
        }
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    fn topology(&self, airport: &str) -> Result<&AirportTopology, AirportError> {
        self.network
            .airport(airport)
            .ok_or_else(|| AirportError::NoTopology(airport.to_string()))
    }

    pub fn classifier(&self, airport: &str) -> Option<Arc<RcClassifier<T>>> {
        self.classifiers
            .read()
            .expect("classifier lock poisoned")
            .get(airport)
            .cloned()
    }

    pub fn install_classifier(&self, c: RcClassifier<T>) -> Arc<RcClassifier<T>> {
        let c = Arc::new(c);
        let mut guard = self.classifiers.write().expect("classifier lock poisoned");
        let mut next = (**guard).clone();
        next.insert(c.airport_id.clone(), c.clone());
        *guard = Arc::new(next);
        c
    }

    /// Multinomial logistic regression from weather to configuration label.
    pub fn train_rc_classifier(
        &self,
        airport: &str,
        history: &[(WeatherObservation, String)],
        publish: Option<&ModelStore>,
    ) -> Result<Arc<RcClassifier<T>>, AirportError> {
        let topo = self.topology(airport)?;
        if history.len() < MIN_RC_SAMPLES {
            return Err(AirportError::InsufficientData {
                got: history.len(),
                need: MIN_RC_SAMPLES,
            });
        }
        if let Some((_, label)) = history.iter().find(|(_, l)| topo.config(l).is_none()) {
            return Err(AirportError::UnknownConfig {
                airport: airport.to_string(),
                label: label.clone(),
            });
        }
        let rows: Vec<Vec<T>> = history.iter().map(|(o, _)| rc_features(o)).collect();
        let labels: Vec<String> = history.iter().map(|(_, l)| l.clone()).collect();
        let ds = Dataset::new(
            RC_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows,
            vec![T::zero(); history.len()],
            Vec::new(),
        )
        .expect("weather features are finite");
        let model = train_classifier(&ds, &labels, &LogisticHyper::default(), 0)?
            .with_provenance(None, None, Some(format!("rc/{airport}")));
        let model_id = match publish {
            Some(models) => {
                let id = models.publish(&model)?;
                models.register(&rc_registry_key(airport), &id, None)?;
                Some(id)
            }
            None => None,
        };
        Ok(self.install_classifier(RcClassifier {
            airport_id: airport.to_string(),
            single_class: model.is_single_class(),
            model: Arc::new(model),
            model_id,
        }))
    }

    /// Installs the latest registered classifier of every airport found in
    /// the registry. Returns how many were loaded.
    pub fn load_published(&self, models: &ModelStore) -> Result<usize, AirportError> {
        let mut n = 0;
        for airport in self.network.airport_ids() {
            if let Some(entry) = models.latest(&rc_registry_key(&airport))? {
                let model = models.load::<T>(&entry.model_id)?;
                self.install_classifier(RcClassifier {
                    airport_id: airport,
                    single_class: model.is_single_class(),
                    model: Arc::new(model),
                    model_id: Some(entry.model_id),
                });
                n += 1;
            }
        }
        Ok(n)
    }

    /// Most probable configuration; ties go to the lowest configuration id.
    pub fn predict_rc(&self, airport: &str, weather: &WeatherObservation) -> Result<String, AirportError> {
        let c = self
            .classifier(airport)
            .ok_or_else(|| AirportError::NoClassifier(airport.to_string()))?;
        let (_, p) = c.model.predict_class(&rc_features::<T>(weather))?;
        let classes = c.model.classes();
        let mut best = 0;
        for k in 1..p.len() {
            if p[k] > p[best] || (p[k] == p[best] && classes[k] < classes[best]) {
                best = k;
            }
        }
        Ok(classes[best].clone())
    }

    /// Capacity for one bucket. Without a classifier the default
    /// configuration is assumed; if any contributing sector cannot be
    /// predicted the static table for the configuration is returned with
    /// `degraded` set. Only an unknown airport is an error.
    pub fn predict_capacity(
        &self,
        airport: &str,
        bucket_start: i64,
        weather: &TimedObservation,
        sectors: &dyn SectorPredictions<T>,
    ) -> Result<CapacityPrediction<T>, AirportError> {
        let topo = self.topology(airport)?;
        let rc = match self.predict_rc(airport, &weather.obs) {
            Ok(rc) => rc,
            Err(AirportError::NoClassifier(_)) => topo.default_rc.clone(),
            Err(e) => return Err(e),
        };
        let arr = topo.arrival_sectors(&rc);
        let dep = topo.departure_sectors(&rc);
        let sum = |list: &[String], target| -> Result<T, String> {
            let mut total = T::zero();
            for s in list {
                total = total + sectors.predict(s, target, bucket_start, weather)?;
            }
            Ok(total)
        };
        match (sum(&arr, Target::Exits), sum(&dep, Target::Entries)) {
            (Ok(arrivals), Ok(departures)) => {
                let mut contributing = arr;
                contributing.extend(dep);
                Ok(CapacityPrediction {
                    airport_id: airport.to_string(),
                    bucket_start,
                    arrivals,
                    departures,
                    rc,
                    degraded: false,
                    contributing_sectors: contributing,
                })
            }
            _ => Ok(self.fallback(topo, bucket_start, rc)),
        }
    }

    /// [`predict_capacity`](Self::predict_capacity) with the airport
    /// station's latest observation at or before `bucket_start`; without one
    /// (or if it is over 24 h old) the static table for the default
    /// configuration is returned, degraded.
    pub fn predict_capacity_at(
        &self,
        airport: &str,
        bucket_start: i64,
        weather: &WeatherHistory,
        sectors: &dyn SectorPredictions<T>,
    ) -> Result<CapacityPrediction<T>, AirportError> {
        let topo = self.topology(airport)?;
        match weather.latest(&topo.station, bucket_start) {
            Some(obs) if bucket_start - obs.ts <= crate::pipeline::NO_WEATHER_AFTER_S => {
                self.predict_capacity(airport, bucket_start, obs, sectors)
            }
            _ => Ok(self.fallback(topo, bucket_start, topo.default_rc.clone())),
        }
    }

    fn fallback(&self, topo: &AirportTopology, bucket_start: i64, rc: String) -> CapacityPrediction<T> {
        let cap = topo.static_capacity.get(&rc).copied().unwrap_or_default();
        CapacityPrediction {
            airport_id: topo.id.clone(),
            bucket_start,
            arrivals: T::lit(cap.arrivals),
            departures: T::lit(cap.departures),
            rc,
            degraded: true,
            contributing_sectors: Vec::new(),
        }
    }

    /// Predicted against actual airport movements for every bucket of the
    /// range. Buckets without usable weather fall back to the static table.
    pub fn evaluate_airport(
        &self,
        airport: &str,
        range: DateRange,
        source: &dyn PreparedSource,
        weather: &WeatherHistory,
        sectors: &dyn SectorPredictions<T>,
    ) -> Result<AirportEvaluation<T>, AirportError> {
        self.topology(airport)?;
        if range.is_empty() {
            return Err(AirportError::EmptyRange);
        }
        let mut rows = Vec::with_capacity(range.len() * 96);
        let mut daily = Vec::with_capacity(range.len());
        for date in range.days() {
            let actual: HashMap<i64, (u32, u32)> = source
                .airport_rows(date)?
                .into_iter()
                .filter(|r| r.airport == airport)
                .map(|r| (r.bucket_start, (r.arrivals, r.departures)))
                .collect();
            let first = rows.len();
            for b in day_buckets(date) {
                let pred = self.predict_capacity_at(airport, b, weather, sectors)?;
                let (a, d) = actual.get(&b).copied().unwrap_or((0, 0));
                rows.push(AirportEvalRow {
                    bucket_start: b,
                    actual_arr: T::lit(f64::from(a)),
                    pred_arr: pred.arrivals,
                    actual_dep: T::lit(f64::from(d)),
                    pred_dep: pred.departures,
                    rc: pred.rc,
                    degraded: pred.degraded,
                });
            }
            let day = &rows[first..];
            daily.push((date, series_scores(day)?));
        }
        let (arrival_score, departure_score) = series_scores(&rows)?;
        Ok(AirportEvaluation {
            airport_id: airport.to_string(),
            rows,
            arrival_score,
            departure_score,
            daily_scores: daily,
        })
    }
}

/// Pairs each configuration label of `airport` with the latest weather of
/// `station` at or before the label time; labels without weather are dropped.
pub fn pair_rc_history(
    labels: &[RcLabel],
    airport: &str,
    station: &str,
    weather: &WeatherHistory,
) -> Vec<(WeatherObservation, String)> {
    labels
        .iter()
        .filter(|l| l.airport == airport)
        .filter_map(|l| {
            let o = weather.latest(station, l.ts)?;
            (l.ts - o.ts <= crate::pipeline::NO_WEATHER_AFTER_S).then(|| (o.obs.clone(), l.config.clone()))
        })
        .collect()
}

/// Stored configuration labels of `airport` over `range`, paired with weather.
pub fn rc_history_from_store(
    store: &Store,
    network: &Network,
    airport: &str,
    range: DateRange,
) -> Result<Vec<(WeatherObservation, String)>, AirportError> {
    let topo = network
        .airport(airport)
        .ok_or_else(|| AirportError::NoTopology(airport.to_string()))?;
    let weather = WeatherHistory::from_store(store, range)?;
    let mut labels: Vec<RcLabel> = Vec::new();
    for d in range.days() {
        labels.extend(store.raw.read_records::<RcLabel>(RC_PREFIX, d)?);
    }
    Ok(pair_rc_history(&labels, airport, &topo.station, &weather))
}

/// Mean held-out classification accuracy of the configuration classifier
/// over k folds.
pub fn cross_validate_rc<T: Scalar>(
    history: &[(WeatherObservation, String)],
    cfg: &CvConfig,
) -> Result<f64, AirportError> {
    let folds = kfold_split(history.len(), cfg)?;
    let mut total = 0.0;
    for fold in &folds {
        let held: std::collections::HashSet<usize> = fold.iter().copied().collect();
        let train: Vec<_> = (0..history.len())
            .filter(|i| !held.contains(i))
            .map(|i| history[i].clone())
            .collect();
        let rows: Vec<Vec<T>> = train.iter().map(|(o, _)| rc_features(o)).collect();
        let labels: Vec<String> = train.iter().map(|(_, l)| l.clone()).collect();
        let ds = Dataset::new(
            RC_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows,
            vec![T::zero(); train.len()],
            Vec::new(),
        )
        .expect("weather features are finite");
        let model = train_classifier(&ds, &labels, &LogisticHyper::default(), cfg.seed)?;
        let mut hits = 0usize;
        for &i in fold {
            let (k, _) = model.predict_class(&rc_features::<T>(&history[i].0))?;
            hits += usize::from(model.classes()[k] == history[i].1);
        }
        total += hits as f64 / fold.len() as f64;
    }
    Ok(total / folds.len() as f64)
}

/// Every (sector, target) the airport can draw on under any configuration:
/// exits of arrival sectors and entries of departure sectors.
pub fn required_sector_targets(topo: &AirportTopology) -> Vec<(String, Target)> {
    let mut out = std::collections::BTreeSet::new();
    for rc in topo.config_ids() {
        out.extend(topo.arrival_sectors(&rc).into_iter().map(|s| (s, Target::Exits)));
        out.extend(topo.departure_sectors(&rc).into_iter().map(|s| (s, Target::Entries)));
    }
    out.into_iter().collect()
}

pub fn rc_registry_key(airport: &str) -> String {
    format!("rc/{airport}")
}

fn series_scores<T: Scalar>(rows: &[AirportEvalRow<T>]) -> Result<(T, T), EvalError> {
    let col = |f: fn(&AirportEvalRow<T>) -> T| rows.iter().map(f).collect::<Vec<T>>();
    Ok((
        score(&col(|r| r.actual_arr), &col(|r| r.pred_arr))?,
        score(&col(|r| r.actual_dep), &col(|r| r.pred_dep))?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AirportEvalRow<T> {
    pub bucket_start: i64,
    pub actual_arr: T,
    pub pred_arr: T,
    pub actual_dep: T,
    pub pred_dep: T,
    pub rc: String,
    pub degraded: bool,
}

#[derive(Debug, Clone)]
pub struct AirportEvaluation<T> {
    pub airport_id: String,
    pub rows: Vec<AirportEvalRow<T>>,
    pub arrival_score: T,
    pub departure_score: T,
    /// (arrival, departure) score of each day.
    pub daily_scores: Vec<(chrono::NaiveDate, (T, T))>,
}

impl<T: Scalar> AirportEvaluation<T> {
    pub fn write_timeseries_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "bucket_start,actual_arr,pred_arr,actual_dep,pred_dep")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                format_iso(r.bucket_start),
                r.actual_arr,
                r.pred_arr,
                r.actual_dep,
                r.pred_dep
            )?;
        }
        Ok(())
    }

    pub fn daily_arrival_scores(&self) -> Vec<f64> {
        self.daily_scores.iter().map(|(_, (a, _))| a.as_f64()).collect()
    }

    pub fn daily_departure_scores(&self) -> Vec<f64> {
        self.daily_scores.iter().map(|(_, (_, d))| d.as_f64()).collect()
    }
}
