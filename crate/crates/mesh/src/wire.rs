//! JSON wire format. Predictions are written as JSON numbers with exactly
//! four fractional digits, rounded half-to-even on the exact binary value
//! (what `format!("{:.4}")` produces); negative zero is written as zero and
//! non-finite values as `null`.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use aeroflow_core::timeutil::format_iso;

pub fn decimal4(v: f64) -> Box<RawValue> {
    let text = if !v.is_finite() {
        "null".to_string()
    } else if v == 0.0 {
        "0.0000".to_string()
    } else {
        format!("{v:.4}")
    };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

#[derive(Debug, Serialize)]
pub struct SectorPoint {
    pub bucket: String,
    pub value: Box<RawValue>,
}

#[derive(Debug, Serialize)]
pub struct SectorPrediction {
    pub sector: String,
    pub target: String,
    pub points: Vec<SectorPoint>,
}

impl SectorPrediction {
    pub fn new(sector: &str, target: &str, points: &[(i64, f64)]) -> Self {
        Self {
            sector: sector.to_string(),
            target: target.to_string(),
            points: points
                .iter()
                .map(|&(b, v)| SectorPoint {
                    bucket: format_iso(b),
                    value: decimal4(v),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CapacityPoint {
    pub bucket: String,
    pub rc: String,
    pub arrivals: Box<RawValue>,
    pub departures: Box<RawValue>,
    pub degraded: bool,
}

#[derive(Debug, Serialize)]
pub struct AirportCapacity {
    pub airport: String,
    pub points: Vec<CapacityPoint>,
}

impl AirportCapacity {
    pub fn new(airport: &str, predictions: &[aeroflow_core::CapacityPrediction]) -> Self {
        Self {
            airport: airport.to_string(),
            points: predictions
                .iter()
                .map(|p| CapacityPoint {
                    bucket: format_iso(p.bucket_start),
                    rc: p.rc.clone(),
                    arrivals: decimal4(p.arrivals),
                    departures: decimal4(p.departures),
                    degraded: p.degraded,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct RetrainRequest {
    pub sector: Option<String>,
    pub airport: Option<String>,
    /// `YYYY-MM-DD..YYYY-MM-DD`, inclusive.
    pub range: String,
    /// Sector target; defaults to occupancy.
    pub target: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RetrainResponse {
    pub model_id: String,
    pub cv_score: Box<RawValue>,
}

#[derive(Debug, Serialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}
