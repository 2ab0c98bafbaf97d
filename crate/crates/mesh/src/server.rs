//! HTTP endpoints over the sector and airport services.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use aeroflow_core::airport_service::{
    cross_validate_rc, rc_history_from_store, required_sector_targets, AirportError,
};
use aeroflow_core::eval::CvConfig;
use aeroflow_core::network::Network;
use aeroflow_core::pipeline::{Target, WeatherHistory};
use aeroflow_core::sector_service::SectorError;
use aeroflow_core::store::{Store, StoreConfig, StoreError};
use aeroflow_core::timeutil::{is_bucket_aligned, parse_iso, DateRange, DAY_SECONDS};
use aeroflow_core::{AirportService, SectorService};

use crate::health::{HealthMonitor, SectorHost};
use crate::registry::{Layer, Registry, RegistryError, ServiceDescriptor, ServiceStatus};
use crate::wire::{
    decimal4, AirportCapacity, ErrorBody, ErrorDetail, RetrainRequest, RetrainResponse,
    SectorPrediction,
};

pub const SECTOR_SERVICE: &str = "sector-service";
pub const AIRPORT_SERVICE: &str = "airport-service";
pub const INGEST_SERVICE: &str = "ingest";

/// Longest horizon served by one request.
pub const MAX_HORIZON_S: i64 = 31 * DAY_SECONDS;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServeConfig {
    pub store: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_interval")]
    pub health_interval_s: u64,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_interval() -> u64 {
    10
}

impl ServeConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServeError> {
        toml::from_str(text).map_err(|e| ServeError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("port in use: {0}")]
    PortInUse(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Sector(#[from] SectorError),
    #[error(transparent)]
    Airport(#[from] AirportError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    pub network: Network,
    pub sectors: Arc<SectorService>,
    pub host: Arc<SectorHost>,
    pub airports: Arc<AirportService>,
    pub weather: RwLock<Arc<WeatherHistory>>,
    pub registry: Arc<Registry>,
    pub monitor: Arc<HealthMonitor>,
    pub store: Option<Arc<Store>>,
}

impl AppState {
    /// Wires services, registry and health probe together. Models and
    /// weather are whatever the given services and history already hold.
    pub fn new(
        network: Network,
        sectors: Arc<SectorService>,
        airports: Arc<AirportService>,
        weather: WeatherHistory,
        store: Option<Arc<Store>>,
        interval: Duration,
    ) -> Result<Arc<Self>, RegistryError> {
        let registry = Arc::new(Registry::new());
        registry.register(ServiceDescriptor::new(INGEST_SERVICE, Layer::InputProcessing, "local/ingest", &[]))?;
        registry.register(ServiceDescriptor::new(
            SECTOR_SERVICE,
            Layer::MicroService,
            "local/v1/sectors",
            &[INGEST_SERVICE],
        ))?;
        registry.register(ServiceDescriptor::new(
            AIRPORT_SERVICE,
            Layer::HigherLevel,
            "local/v1/airports",
            &[SECTOR_SERVICE],
        ))?;
        let host = Arc::new(SectorHost::new(SECTOR_SERVICE, sectors.clone(), registry.clone()));
        let monitor = Arc::new(HealthMonitor::new(registry.clone(), interval));
        let probe_host = host.clone();
        monitor.add_probe(SECTOR_SERVICE, Arc::new(move || probe_host.probe()));
        Ok(Arc::new(Self {
            network,
            sectors,
            host,
            airports,
            weather: RwLock::new(Arc::new(weather)),
            registry,
            monitor,
            store,
        }))
    }

    /// Opens the store, loads the network, every published model and all
    /// stored weather.
    pub fn from_store(store: Store, interval: Duration) -> Result<Arc<Self>, ServeError> {
        let network = store.load_network()?;
        let sectors = Arc::new(SectorService::new(network.clone()));
        sectors.load_published(&store.models)?;
        let airports = Arc::new(AirportService::new(network.clone()));
        airports.load_published(&store.models)?;
        let mut obs = Vec::new();
        for d in store.raw.weather_days()? {
            obs.extend(store.raw.read_weather(d)?);
        }
        Ok(Self::new(
            network,
            sectors,
            airports,
            WeatherHistory::new(obs),
            Some(Arc::new(store)),
            interval,
        )?)
    }

    pub fn weather(&self) -> Arc<WeatherHistory> {
        self.weather.read().expect("weather lock poisoned").clone()
    }

    pub fn set_weather(&self, w: WeatherHistory) {
        *self.weather.write().expect("weather lock poisoned") = Arc::new(w);
    }

    /// Models the service still lacks to answer every endpoint.
    pub fn missing_models(&self) -> Vec<String> {
        let mut missing = Vec::new();
        if self.sectors.snapshot().is_empty() {
            missing.push("sector predictors".to_string());
        }
        for topo in &self.network.airports {
            if self.airports.classifier(&topo.id).is_none() {
                missing.push(format!("rc/{}", topo.id));
            }
            for (s, t) in required_sector_targets(topo) {
                if self.sectors.predictor(&s, t).is_none() {
                    missing.push(format!("sector/{s}/{t}"));
                }
            }
        }
        missing
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.into(),
        }
    }

    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.to_string(),
                message: self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<SectorError> for ApiError {
    fn from(e: SectorError) -> Self {
        let (status, code) = match &e {
            SectorError::NoPredictor { .. } => (StatusCode::NOT_FOUND, "no_predictor"),
            SectorError::UnknownSector(_) => (StatusCode::NOT_FOUND, "unknown_sector"),
            SectorError::NoWeather { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "no_weather"),
            SectorError::EmptyRange => (StatusCode::UNPROCESSABLE_ENTITY, "empty_range"),
            SectorError::BadHorizon(_) => (StatusCode::BAD_REQUEST, "bad_range"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<AirportError> for ApiError {
    fn from(e: AirportError) -> Self {
        let (status, code) = match &e {
            AirportError::NoTopology(_) => (StatusCode::NOT_FOUND, "unknown_airport"),
            AirportError::InsufficientData { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "insufficient_data"),
            AirportError::EmptyRange => (StatusCode::UNPROCESSABLE_ENTITY, "empty_range"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/sectors/{id}/prediction", get(sector_prediction))
        .route("/v1/airports/{id}/capacity", get(airport_capacity))
        .route("/v1/admin/retrain", post(retrain))
        .with_state(state)
}

#[derive(Serialize)]
pub struct HealthBody {
    status: ServiceStatus,
    readiness: bool,
    services: Vec<ServiceDescriptor>,
    missing_models: Vec<String>,
}

async fn health(State(st): State<Arc<AppState>>) -> Json<HealthBody> {
    let services = st.registry.list();
    let status = if services.iter().all(|s| s.status == ServiceStatus::Up) {
        ServiceStatus::Up
    } else {
        ServiceStatus::Degraded
    };
    let missing_models = st.missing_models();
    let body = HealthBody {
        status,
        readiness: missing_models.is_empty(),
        services,
        missing_models,
    };
    Json(body)
}

/// `from`/`to` query parameters: ISO instants, bucket-aligned, ordered.
pub fn parse_window(q: &HashMap<String, String>) -> Result<(i64, i64), ApiError> {
    let get = |k: &str| {
        let v = q
            .get(k)
            .ok_or_else(|| ApiError::bad_request("missing_parameter", format!("`{k}` is required")))?;
        let t = parse_iso(v)
            .map_err(|e| ApiError::bad_request("bad_parameter", format!("`{k}`: {e}")))?;
        if !is_bucket_aligned(t) {
            return Err(ApiError::bad_request(
                "bad_parameter",
                format!("`{k}` must be on a 15-minute boundary"),
            ));
        }
        Ok(t)
    };
    let (from, to) = (get("from")?, get("to")?);
    if from > to {
        return Err(ApiError::bad_request("bad_range", "`from` is after `to`"));
    }
    if to - from > MAX_HORIZON_S {
        return Err(ApiError::bad_request("bad_range", "horizon longer than 31 days"));
    }
    Ok((from, to))
}

pub fn parse_target(q: &HashMap<String, String>) -> Result<Target, ApiError> {
    let t = q
        .get("target")
        .ok_or_else(|| ApiError::bad_request("missing_parameter", "`target` is required"))?;
    t.parse()
        .map_err(|_| ApiError::bad_request("bad_parameter", format!("unknown target `{t}`")))
}

async fn sector_prediction(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<SectorPrediction>, ApiError> {
    let target = parse_target(&q)?;
    let (from, to) = parse_window(&q)?;
    if !st.host.is_online() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "unavailable",
            format!("{SECTOR_SERVICE} is offline"),
        ));
    }
    let points = st
        .sectors
        .predict_horizon(&id, target, from, to, &st.weather())?;
    Ok(Json(SectorPrediction::new(&id, target.as_str(), &points)))
}

async fn airport_capacity(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<AirportCapacity>, ApiError> {
    let (from, to) = parse_window(&q)?;
    let weather = st.weather();
    let preds = (from..to)
        .step_by(aeroflow_core::timeutil::BUCKET_SECONDS as usize)
        .map(|b| st.airports.predict_capacity_at(&id, b, &weather, st.host.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Json(AirportCapacity::new(&id, &preds)))
}

async fn retrain(
    State(st): State<Arc<AppState>>,
    body: Result<Json<RetrainRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<RetrainResponse>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::bad_request("bad_body", e.body_text()))?;
    let range: DateRange = req
        .range
        .parse()
        .map_err(|_| ApiError::bad_request("bad_parameter", format!("bad range `{}`", req.range)))?;
    let Some(store) = st.store.clone() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_store", "no store attached"));
    };
    let st2 = st.clone();
    let job = match (req.sector, req.airport) {
        (Some(sector), None) => {
            let target = match req.target.as_deref() {
                None => Target::Occupancy,
                Some(t) => t
                    .parse()
                    .map_err(|_| ApiError::bad_request("bad_parameter", format!("unknown target `{t}`")))?,
            };
            tokio::task::spawn_blocking(move || -> Result<(String, f64), ApiError> {
                let p = st2.sectors.train_sector(&store, &sector, target, range)?;
                Ok((p.model_id.clone().unwrap_or_default(), p.cv_score))
            })
        }
        (None, Some(airport)) => tokio::task::spawn_blocking(move || -> Result<(String, f64), ApiError> {
            let history = rc_history_from_store(&store, &st2.network, &airport, range)?;
            let c = st2.airports.train_rc_classifier(&airport, &history, Some(&store.models))?;
            let score = cross_validate_rc::<f64>(&history, &CvConfig::default())?;
            Ok((c.model_id.clone().unwrap_or_default(), score))
        }),
        _ => {
            return Err(ApiError::bad_request(
                "bad_body",
                "exactly one of `sector` or `airport` is required",
            ))
        }
    };
    let (model_id, score) = job
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(RetrainResponse {
        model_id,
        cv_score: decimal4(score),
    }))
}

/// Binds, starts health probing and serves until interrupted.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let store = Store::open(&config.store, StoreConfig::default())?;
    let interval = Duration::from_secs(config.health_interval_s.max(1));
    let state = tokio::task::spawn_blocking(move || AppState::from_store(store, interval))
        .await
        .map_err(|e| ServeError::Config(e.to_string()))??;
    let addr: SocketAddr = config
        .bind
        .parse()
        .map_err(|e| ServeError::Config(format!("bind `{}`: {e}", config.bind)))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse(config.bind.clone())
        } else {
            ServeError::Io(e)
        }
    })?;
    let missing = state.missing_models();
    if !missing.is_empty() {
        tracing::warn!(?missing, "serving without some models");
    }
    let probes = state.monitor.clone().spawn();
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    probes.abort();
    Ok(())
}
