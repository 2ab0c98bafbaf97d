//! Per-sector prediction service: one selected model per (sector, target),
//! served from an immutable snapshot that retraining swaps atomically.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

use crate::eval::{
    score, score_ambiguous, select_model, CvConfig, EvalError, LeaderboardEntry, SectorResult,
};
use crate::metar::TimedObservation;
use crate::ml::{Hyper, ModelError, ModelKind, TrainedModel};
use crate::network::Network;
use crate::pipeline::{
    build_training_set, FeatureVector, PipelineError, PreparedSource, Target, WeatherHistory,
    NO_WEATHER_AFTER_S,
};
use crate::scalar::Scalar;
use crate::store::{ModelStore, Store, StoreError};
use crate::timeutil::{is_bucket_aligned, DateRange, BUCKET_SECONDS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SectorError {
    #[error("no predictor for sector {sector} ({target})")]
    NoPredictor { sector: String, target: Target },
    #[error("no usable weather for station {station} at {ts}")]
    NoWeather { station: String, ts: i64 },
    #[error("unknown sector {0}")]
    UnknownSector(String),
    #[error("empty range")]
    EmptyRange,
    #[error("bad horizon: {0}")]
    BadHorizon(String),
    #[error("all candidates failed: {0:?}")]
    AllCandidatesFailed(Vec<String>),
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error(transparent)]
    Eval(EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<PipelineError> for SectorError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::EmptyRange => SectorError::EmptyRange,
            PipelineError::NoWeather { station, ts } => SectorError::NoWeather { station, ts },
            PipelineError::UnknownSector(s) => SectorError::UnknownSector(s),
            e => SectorError::Pipeline(e),
        }
    }
}

impl From<EvalError> for SectorError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::AllCandidatesFailed(v) => SectorError::AllCandidatesFailed(v),
            EvalError::Model(m) => SectorError::Model(m),
            e => SectorError::Eval(e),
        }
    }
}

/// Model selection pool used when none is configured.
pub fn default_candidates() -> Vec<Hyper> {
    ModelKind::REGRESSORS.iter().map(|&k| Hyper::default_for(k)).collect()
}

#[derive(Debug, Clone)]
pub struct SectorPredictor<T> {
    pub sector_id: String,
    pub target: Target,
    pub model: Arc<TrainedModel<T>>,
    /// ML collection id when published.
    pub model_id: Option<String>,
    pub cv_score: T,
    pub version: u64,
    pub leaderboard: Vec<LeaderboardEntry<T>>,
}

type Key = (String, Target);
type Snapshot<T> = Arc<HashMap<Key, Arc<SectorPredictor<T>>>>;

pub struct SectorService<T> {
    network: Network,
    candidates: Vec<Hyper>,
    cv: CvConfig,
    snapshot: RwLock<Snapshot<T>>,
    // Serializes writers so version bumps never race.
    write: Mutex<()>,
}

impl<T: Scalar> SectorService<T> {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            candidates: default_candidates(),
            cv: CvConfig::default(),
            snapshot: RwLock::new(Arc::new(HashMap::new())),
            write: Mutex::new(()),
        }
    }

    pub fn with_candidates(mut self, candidates: Vec<Hyper>) -> Self {
        self.candidates = candidates;
        self
    }

    pub fn with_cv(mut self, cv: CvConfig) -> Self {
        self.cv = cv;
        self
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Current immutable view of all predictors.
    pub fn snapshot(&self) -> Snapshot<T> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    pub fn predictor(&self, sector: &str, target: Target) -> Option<Arc<SectorPredictor<T>>> {
        self.snapshot().get(&(sector.to_string(), target)).cloned()
    }

    /// Installs a predictor, assigning it the next version for its key.
    pub fn install(&self, mut predictor: SectorPredictor<T>) -> Arc<SectorPredictor<T>> {
        let _w = self.write.lock().expect("writer lock poisoned");
        let current = self.snapshot();
        let key = (predictor.sector_id.clone(), predictor.target);
        let prev = current.get(&key).map_or(0, |p| p.version);
        predictor.version = predictor.version.max(prev + 1);
        let predictor = Arc::new(predictor);
        let mut next = (*current).clone();
        next.insert(key, predictor.clone());
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(next);
        predictor
    }

    /// Removes every predictor (used to simulate an unavailable service).
    pub fn clear(&self) {
        let _w = self.write.lock().expect("writer lock poisoned");
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(HashMap::new());
    }

    /// Builds the sector's dataset, runs model selection and installs the
    /// winner; publishes it when a model store is given.
    pub fn train(
        &self,
        source: &dyn PreparedSource,
        weather: &WeatherHistory,
        sector: &str,
        target: Target,
        range: DateRange,
        publish: Option<&ModelStore>,
    ) -> Result<Arc<SectorPredictor<T>>, SectorError> {
        let set = build_training_set::<T>(source, weather, &self.network, sector, target, range)?;
        let selection = select_model(&set.dataset, &self.candidates, &self.cv)?;
        let model = selection.model.with_provenance(
            Some(range),
            Some(sector.to_string()),
            Some(target.as_str().to_string()),
        );
        let mut version = 0;
        let model_id = match publish {
            Some(models) => {
                let id = models.publish(&model)?;
                let entry = models.register(
                    &registry_key(sector, target),
                    &id,
                    Some(selection.cv.mean.as_f64()),
                )?;
                version = entry.version;
                Some(id)
            }
            None => None,
        };
        Ok(self.install(SectorPredictor {
            sector_id: sector.to_string(),
            target,
            model: Arc::new(model),
            model_id,
            cv_score: selection.cv.mean,
            version,
            leaderboard: selection.leaderboard,
        }))
    }

    /// [`train`](Self::train) against a store's prepared days and weather.
    pub fn train_sector(
        &self,
        store: &Store,
        sector: &str,
        target: Target,
        range: DateRange,
    ) -> Result<Arc<SectorPredictor<T>>, SectorError> {
        let weather = WeatherHistory::from_store(store, range)?;
        self.train(&store.prepared, &weather, sector, target, range, Some(&store.models))
    }

    /// Installs the latest registered model of every (sector, target) found
    /// in the registry. Returns how many were loaded.
    pub fn load_published(&self, models: &ModelStore) -> Result<usize, SectorError> {
        let mut n = 0;
        for sector in self.network.sector_ids() {
            for target in Target::ALL {
                let Some(entry) = models.latest(&registry_key(&sector, target))? else {
                    continue;
                };
                let model = models.load::<T>(&entry.model_id)?;
                self.install(SectorPredictor {
                    sector_id: sector.clone(),
                    target,
                    model: Arc::new(model),
                    model_id: Some(entry.model_id),
                    cv_score: T::lit(entry.score.unwrap_or(f64::NAN)),
                    version: entry.version,
                    leaderboard: Vec::new(),
                });
                n += 1;
            }
        }
        Ok(n)
    }

    /// Prediction for one bucket given the observation in force at its start.
    pub fn predict_sector(
        &self,
        sector: &str,
        target: Target,
        bucket_start: i64,
        weather: &TimedObservation,
    ) -> Result<T, SectorError> {
        let predictor = self.predictor(sector, target).ok_or_else(|| SectorError::NoPredictor {
            sector: sector.to_string(),
            target,
        })?;
        let age = bucket_start - weather.ts;
        if !(0..=NO_WEATHER_AFTER_S).contains(&age) {
            return Err(SectorError::NoWeather {
                station: weather.obs.station.clone(),
                ts: bucket_start,
            });
        }
        let x = FeatureVector::from_observation(bucket_start, weather).cast::<T>();
        Ok(predictor.model.predict(&x)?)
    }

    /// One prediction per bucket in `[from, to)`, each using the latest
    /// observation of the sector's station at or before the bucket start.
    pub fn predict_horizon(
        &self,
        sector: &str,
        target: Target,
        from: i64,
        to: i64,
        weather: &WeatherHistory,
    ) -> Result<Vec<(i64, T)>, SectorError> {
        if !is_bucket_aligned(from) || !is_bucket_aligned(to) || from > to {
            return Err(SectorError::BadHorizon(format!(
                "from/to must be bucket-aligned with from <= to (got {from}..{to})"
            )));
        }
        if self.predictor(sector, target).is_none() {
            return Err(SectorError::NoPredictor {
                sector: sector.to_string(),
                target,
            });
        }
        let station = self
            .network
            .station_of(sector)
            .ok_or_else(|| SectorError::UnknownSector(sector.to_string()))?;
        (from..to)
            .step_by(BUCKET_SECONDS as usize)
            .map(|b| {
                let obs = weather.latest(station, b).ok_or_else(|| SectorError::NoWeather {
                    station: station.to_string(),
                    ts: b,
                })?;
                Ok((b, self.predict_sector(sector, target, b, obs)?))
            })
            .collect()
    }
}

impl<T: Scalar> SectorService<T> {
    /// Scores the installed predictor for (sector, target) on `range`, raw
    /// (primary ground truth only) and balanced over ambiguous readings,
    /// together with the sector's daily entry totals.
    pub fn evaluate_sector(
        &self,
        source: &dyn PreparedSource,
        weather: &WeatherHistory,
        sector: &str,
        target: Target,
        range: DateRange,
    ) -> Result<SectorResult, SectorError> {
        let predictor = self.predictor(sector, target).ok_or_else(|| SectorError::NoPredictor {
            sector: sector.to_string(),
            target,
        })?;
        let set = build_training_set::<T>(source, weather, &self.network, sector, target, range)?;
        let ds = &set.dataset;
        let pred = ds
            .rows()
            .map(|r| predictor.model.predict(r))
            .collect::<Result<Vec<T>, _>>()?;
        let raw = score(ds.y(), &pred)?;
        let balanced = score_ambiguous(ds.y(), ds.alt_y(), &pred)?;
        let mut daily_entries = Vec::with_capacity(range.len());
        for d in range.days() {
            let rows = source.pi_rows(d)?;
            let total: u32 = rows.iter().filter(|r| r.sector == sector).map(|r| r.entries).sum();
            daily_entries.push(f64::from(total));
        }
        Ok(SectorResult {
            sector: sector.to_string(),
            daily_entries,
            raw_score: raw.as_f64(),
            balanced_score: balanced.as_f64(),
        })
    }
}

pub fn registry_key(sector: &str, target: Target) -> String {
    format!("sector/{sector}/{}", target.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metar::parse_metar;
    use crate::network::SectorInfo;
    use crate::pipeline::{reduce_day, MemoryPrepared};
    use crate::store::{EventKind, FlightEvent};
    use crate::timeutil::{day_start, parse_date};

    fn network() -> Network {
        Network {
            sectors: vec![SectorInfo {
                id: "S".into(),
                station: "EDDF".into(),
            }],
            airports: vec![],
        }
    }

    fn weather(days: &DateRange) -> WeatherHistory {
        WeatherHistory::new(days.days().flat_map(|d| {
            (0..48).map(move |h| TimedObservation {
                ts: day_start(d) + h * 1800,
                obs: parse_metar(&format!("EDDF 010000Z {:03}{:02}KT 9999 12/05 Q1013", (h * 7) % 36 * 10, 5 + h % 9)).unwrap(),
            })
        }))
    }

    fn quiet_days(range: DateRange) -> MemoryPrepared {
        let mut m = MemoryPrepared::default();
        for d in range.days() {
            m.insert(reduce_day(d, &[], &network()));
        }
        m
    }

    fn range() -> DateRange {
        DateRange::new(parse_date("2024-03-01").unwrap(), parse_date("2024-03-03").unwrap()).unwrap()
    }

    #[test]
    fn zero_traffic_sector_scores_one_with_mean() {
        let svc = SectorService::<f64>::new(network());
        let p = svc
            .train(&quiet_days(range()), &weather(&range()), "S", Target::Occupancy, range(), None)
            .unwrap();
        assert_eq!(p.cv_score, 1.0);
        assert_eq!(p.model.model_kind, ModelKind::Mean);
    }

    #[test]
    fn retrain_bumps_version_keeps_model() {
        let mut src = MemoryPrepared::default();
        for d in range().days() {
            let t0 = day_start(d);
            let events: Vec<FlightEvent> = (0..60)
                .flat_map(|i| {
                    let a = t0 + i * 1400;
                    [
                        FlightEvent::new(format!("F{i}"), EventKind::SectorEntry, "S", a),
                        FlightEvent::new(format!("F{i}"), EventKind::SectorExit, "S", a + 600 + i * 7),
                    ]
                })
                .collect();
            src.insert(reduce_day(d, &events, &network()));
        }
        let w = weather(&range());
        let svc = SectorService::<f64>::new(network());
        let a = svc.train(&src, &w, "S", Target::Occupancy, range(), None).unwrap();
        let b = svc.train(&src, &w, "S", Target::Occupancy, range(), None).unwrap();
        assert_eq!(b.version, a.version + 1);
        assert_eq!(a.model.to_json(), b.model.to_json());
    }

    #[test]
    fn horizon_matches_pointwise() {
        let svc = SectorService::<f64>::new(network());
        let w = weather(&range());
        svc.train(&quiet_days(range()), &w, "S", Target::Entries, range(), None).unwrap();
        let from = day_start(range().from);
        let h = svc.predict_horizon("S", Target::Entries, from, from + 86_400, &w).unwrap();
        assert_eq!(h.len(), 96);
        for (b, v) in &h {
            let obs = w.latest("EDDF", *b).unwrap();
            assert_eq!(*v, svc.predict_sector("S", Target::Entries, *b, obs).unwrap());
        }
        assert!(svc.predict_horizon("S", Target::Entries, from, from, &w).unwrap().is_empty());
        assert!(matches!(
            svc.predict_horizon("X", Target::Entries, from, from + 900, &w),
            Err(SectorError::NoPredictor { .. })
        ));
    }
}
