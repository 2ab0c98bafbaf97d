//! Sector occupancy and airport capacity prediction from flight events and
//! METAR weather. Numeric code is generic over [`scalar::Scalar`] (`f32` or
//! `f64`); the aliases below fix it to `f64` unless suffixed `F32`.

pub mod airport_service;
pub mod dataset;
pub mod eval;
pub mod metar;
pub mod ml;
pub mod network;
pub mod pipeline;
pub mod scalar;
pub mod sector_service;
pub mod store;
pub mod timeutil;
pub mod traffic_gen;

pub type Dataset = dataset::Dataset<f64>;
pub type DatasetF32 = dataset::Dataset<f32>;
pub type TrainedModel = ml::TrainedModel<f64>;
pub type TrainedModelF32 = ml::TrainedModel<f32>;
pub type EvaluationSeries = eval::EvaluationSeries<f64>;
pub type SectorPredictor = sector_service::SectorPredictor<f64>;
pub type SectorService = sector_service::SectorService<f64>;
pub type SectorServiceF32 = sector_service::SectorService<f32>;
pub type AirportService = airport_service::AirportService<f64>;
pub type AirportServiceF32 = airport_service::AirportService<f32>;
pub type CapacityPrediction = airport_service::CapacityPrediction<f64>;
