use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::GenError;
use crate::network::{AirportTopology, Network, Runway, RunwayConfig, SectorInfo, StaticCapacity};

pub const MAX_AMBIGUITY_RATE: f64 = 0.1;

/// What to do with a flight whose sector exit would fall after midnight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overnight {
    /// Emit only the entry; the presence runs to the end of the day.
    #[default]
    Extend,
    /// Do not generate the flight.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transit {
    pub median_min: f64,
    pub sigma_log: f64,
}

impl Default for Transit {
    fn default() -> Self {
        Self {
            median_min: 12.0,
            sigma_log: 0.4,
        }
    }
}

/// AR(1) weather model of one station, sampled every 30 minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationModel {
    pub id: String,
    #[serde(default = "defaults::ar")]
    pub ar: f64,
    #[serde(default = "defaults::temp_mean")]
    pub temp_mean_c: f64,
    #[serde(default = "defaults::temp_diurnal")]
    pub temp_diurnal_c: f64,
    #[serde(default = "defaults::temp_sigma")]
    pub temp_sigma_c: f64,
    #[serde(default = "defaults::dew_spread")]
    pub dew_spread_c: f64,
    #[serde(default = "defaults::wind_mean")]
    pub wind_mean_kt: f64,
    #[serde(default = "defaults::wind_sigma")]
    pub wind_sigma_kt: f64,
    /// Standard deviation of the per-step wind direction random walk.
    #[serde(default = "defaults::dir_step")]
    pub dir_step_deg: f64,
    #[serde(default = "defaults::pressure_mean")]
    pub pressure_mean_hpa: f64,
    #[serde(default = "defaults::pressure_sigma")]
    pub pressure_sigma_hpa: f64,
}

mod defaults {
    pub fn ar() -> f64 {
        0.9
    }
    pub fn temp_mean() -> f64 {
        12.0
    }
    pub fn temp_diurnal() -> f64 {
        5.0
    }
    pub fn temp_sigma() -> f64 {
        1.5
    }
    pub fn dew_spread() -> f64 {
        5.0
    }
    pub fn wind_mean() -> f64 {
        11.0
    }
    pub fn wind_sigma() -> f64 {
        6.0
    }
    pub fn dir_step() -> f64 {
        15.0
    }
    pub fn pressure_mean() -> f64 {
        1013.0
    }
    pub fn pressure_sigma() -> f64 {
        5.0
    }
    pub fn weekly() -> [f64; 7] {
        [1.0; 7]
    }
    pub fn arrival_delay() -> [u32; 2] {
        [60, 240]
    }
    pub fn departure_lead() -> [u32; 2] {
        [120, 360]
    }
}

/// Demand profile of one sector:
/// `base_rate · (1 + A·sin(2π·hour/24 + φ)) · weekly[dow]`, scaled by
/// `1 - wind_reduction` while the station wind is at or above the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorModel {
    pub id: String,
    pub station: String,
    /// Flights per hour.
    pub base_rate: f64,
    #[serde(default)]
    pub diurnal_amplitude: f64,
    /// Radians.
    #[serde(default)]
    pub diurnal_phase: f64,
    /// Monday first.
    #[serde(default = "defaults::weekly")]
    pub weekly: [f64; 7],
    #[serde(default)]
    pub wind_threshold_kt: f64,
    #[serde(default)]
    pub wind_reduction: f64,
}

impl SectorModel {
    pub fn weather_coupled(&self) -> bool {
        self.wind_reduction > 0.0 && self.base_rate > 0.0
    }

    /// Expected flights per hour at fractional `hour` of a day with weekday
    /// index `dow`, given the current wind speed.
    pub fn rate(&self, hour: f64, dow: usize, wind_kt: f64) -> f64 {
        let diurnal = 1.0
            + self.diurnal_amplitude
                * (std::f64::consts::TAU * hour / 24.0 + self.diurnal_phase).sin();
        let mut r = self.base_rate * diurnal * self.weekly[dow];
        if wind_kt >= self.wind_threshold_kt && self.wind_reduction > 0.0 {
            r *= 1.0 - self.wind_reduction;
        }
        r.max(0.0)
    }
}

/// Airport topology plus the rule that generates runway-configuration labels:
/// `rc_west` when the wind blows from (180°, 360°), `rc_east` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AirportModel {
    pub id: String,
    pub station: String,
    pub runways: Vec<Runway>,
    pub configs: Vec<RunwayConfig>,
    pub default_rc: String,
    pub static_capacity: BTreeMap<String, StaticCapacity>,
    pub rc_west: String,
    pub rc_east: String,
    /// ARRIVAL follows an arrival-sector exit by this many seconds (range).
    #[serde(default = "defaults::arrival_delay")]
    pub arrival_delay_s: [u32; 2],
    /// DEPARTURE precedes a departure-sector entry by this many seconds (range).
    #[serde(default = "defaults::departure_lead")]
    pub departure_lead_s: [u32; 2],
}

impl AirportModel {
    pub fn topology(&self) -> AirportTopology {
        AirportTopology {
            id: self.id.clone(),
            station: self.station.clone(),
            runways: self.runways.clone(),
            configs: self.configs.clone(),
            default_rc: self.default_rc.clone(),
            static_capacity: self.static_capacity.clone(),
        }
    }

    /// The labelling rule for a reported wind direction.
    pub fn rc_for_wind(&self, wind_dir_deg: u16) -> &str {
        if wind_dir_deg > 180 && wind_dir_deg < 360 {
            &self.rc_west
        } else {
            &self.rc_east
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default)]
    pub ambiguity_rate: f64,
    #[serde(default)]
    pub overnight: Overnight,
    #[serde(default)]
    pub transit: Transit,
    pub valid_from: Option<NaiveDate>,
    pub valid_to: Option<NaiveDate>,
    pub stations: Vec<StationModel>,
    pub sectors: Vec<SectorModel>,
    #[serde(default)]
    pub airports: Vec<AirportModel>,
}

const REFERENCE: &str = include_str!("../../scenarios/reference.toml");

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, GenError> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| GenError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// A 20-sector, one-airport scenario with diurnal, weekly and
    /// wind-coupled demand.
    pub fn reference() -> Self {
        Self::from_toml(REFERENCE).expect("reference scenario is valid")
    }

    pub fn reference_toml() -> &'static str {
        REFERENCE
    }

    pub fn network(&self) -> Network {
        Network {
            sectors: self
                .sectors
                .iter()
                .map(|s| SectorInfo {
                    id: s.id.clone(),
                    station: s.station.clone(),
                })
                .collect(),
            airports: self.airports.iter().map(AirportModel::topology).collect(),
        }
    }

    pub fn sector(&self, id: &str) -> Option<&SectorModel> {
        self.sectors.iter().find(|s| s.id == id)
    }

    pub fn station(&self, id: &str) -> Option<&StationModel> {
        self.stations.iter().find(|s| s.id == id)
    }

    pub fn covers(&self, date: NaiveDate) -> bool {
        self.valid_from.is_none_or(|f| date >= f) && self.valid_to.is_none_or(|t| date <= t)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InvalidScenario(m));
        if !(0.0..=MAX_AMBIGUITY_RATE).contains(&self.ambiguity_rate) {
            return bad(format!(
                "ambiguity_rate {} outside [0, {MAX_AMBIGUITY_RATE}]",
                self.ambiguity_rate
            ));
        }
        if !(self.transit.median_min > 0.0 && self.transit.sigma_log >= 0.0) {
            return bad("transit median must be positive and sigma non-negative".into());
        }
        let mut stations = BTreeSet::new();
        for st in &self.stations {
            if st.id.len() != 4 || !st.id.chars().all(|c| c.is_ascii_alphanumeric()) {
                return bad(format!("station id `{}` must be 4 alphanumerics", st.id));
            }
            if !stations.insert(st.id.as_str()) {
                return bad(format!("duplicate station `{}`", st.id));
            }
            if !(0.0..1.0).contains(&st.ar) || st.wind_sigma_kt < 0.0 || st.temp_sigma_c < 0.0 {
                return bad(format!("station `{}`: bad AR parameters", st.id));
            }
        }
        for s in &self.sectors {
            if !stations.contains(s.station.as_str()) {
                return bad(format!("sector `{}` uses unknown station `{}`", s.id, s.station));
            }
            let finite = [s.base_rate, s.diurnal_amplitude, s.diurnal_phase, s.wind_threshold_kt]
                .iter()
                .chain(&s.weekly)
                .all(|v| v.is_finite());
            if !finite || s.base_rate < 0.0 || s.weekly.iter().any(|&w| w < 0.0) {
                return bad(format!("sector `{}`: rates must be finite and non-negative", s.id));
            }
            if !(0.0..=1.0).contains(&s.wind_reduction) {
                return bad(format!("sector `{}`: wind_reduction outside [0, 1]", s.id));
            }
        }
        for a in &self.airports {
            if !stations.contains(a.station.as_str()) {
                return bad(format!("airport `{}` uses unknown station `{}`", a.id, a.station));
            }
            let configs: BTreeSet<&str> = a.configs.iter().map(|c| c.id.as_str()).collect();
            if !configs.contains(a.rc_west.as_str()) || !configs.contains(a.rc_east.as_str()) {
                return bad(format!("airport `{}`: rc_west/rc_east must name configs", a.id));
            }
            if a.arrival_delay_s[0] > a.arrival_delay_s[1]
                || a.departure_lead_s[0] > a.departure_lead_s[1]
            {
                return bad(format!("airport `{}`: empty delay range", a.id));
            }
        }
        if let (Some(f), Some(t)) = (self.valid_from, self.valid_to) {
            if f > t {
                return bad("valid_from after valid_to".into());
            }
        }
        self.network()
            .validate()
            .or_else(|e| bad(e.to_string()))
    }
}
