//! Static airspace layout: sectors, their weather stations, and airport
//! runway topologies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("airport {airport}: {reason}")]
    Airport { airport: String, reason: String },
    #[error("duplicate sector id `{0}`")]
    DuplicateSector(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorInfo {
    pub id: String,
    /// Weather station whose observations feed this sector's features.
    pub station: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunwayMode {
    Arrivals,
    Departures,
    Both,
}

impl RunwayMode {
    pub fn arrivals(self) -> bool {
        matches!(self, RunwayMode::Arrivals | RunwayMode::Both)
    }

    pub fn departures(self) -> bool {
        matches!(self, RunwayMode::Departures | RunwayMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runway {
    pub id: String,
    pub arrival_sectors: Vec<String>,
    pub departure_sectors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRunway {
    pub runway: String,
    pub mode: RunwayMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunwayConfig {
    pub id: String,
    pub runways: Vec<ActiveRunway>,
}

/// Declared-capacity style fallback, per 15-minute bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticCapacity {
    pub arrivals: f64,
    pub departures: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirportTopology {
    pub id: String,
    pub station: String,
    pub runways: Vec<Runway>,
    pub configs: Vec<RunwayConfig>,
    /// Used when no classifier is available.
    pub default_rc: String,
    pub static_capacity: BTreeMap<String, StaticCapacity>,
}

impl AirportTopology {
    pub fn config(&self, id: &str) -> Option<&RunwayConfig> {
        self.configs.iter().find(|c| c.id == id)
    }

    pub fn runway(&self, id: &str) -> Option<&Runway> {
        self.runways.iter().find(|r| r.id == id)
    }

    /// Config ids in sorted order; class index `i` of an RC classifier is `config_ids()[i]`.
    pub fn config_ids(&self) -> Vec<String> {
        self.configs
            .iter()
            .map(|c| c.id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    fn sectors_for(&self, rc: &str, arrivals: bool) -> Vec<String> {
        let Some(cfg) = self.config(rc) else {
            return Vec::new();
        };
        let mut set = BTreeSet::new();
        for active in &cfg.runways {
            let used = if arrivals {
                active.mode.arrivals()
            } else {
                active.mode.departures()
            };
            if !used {
                continue;
            }
            if let Some(r) = self.runway(&active.runway) {
                let list = if arrivals {
                    &r.arrival_sectors
                } else {
                    &r.departure_sectors
                };
                set.extend(list.iter().cloned());
            }
        }
        set.into_iter().collect()
    }

    /// Sorted, deduplicated arrival sectors of runways landing traffic under `rc`.
    pub fn arrival_sectors(&self, rc: &str) -> Vec<String> {
        self.sectors_for(rc, true)
    }

    /// Sorted, deduplicated departure sectors of runways launching traffic under `rc`.
    pub fn departure_sectors(&self, rc: &str) -> Vec<String> {
        self.sectors_for(rc, false)
    }

    pub fn validate(&self, known_sectors: &BTreeSet<&str>) -> Result<(), TopologyError> {
        let err = |reason: String| TopologyError::Airport {
            airport: self.id.clone(),
            reason,
        };
        if self.runways.is_empty() {
            return Err(err("no runways".into()));
        }
        let mut runway_ids = BTreeSet::new();
        for r in &self.runways {
            if !runway_ids.insert(r.id.as_str()) {
                return Err(err(format!("duplicate runway `{}`", r.id)));
            }
            if r.arrival_sectors.is_empty() || r.departure_sectors.is_empty() {
                return Err(err(format!("runway `{}` needs arrival and departure sectors", r.id)));
            }
            for s in r.arrival_sectors.iter().chain(&r.departure_sectors) {
                if !known_sectors.contains(s.as_str()) {
                    return Err(err(format!("runway `{}` references unknown sector `{s}`", r.id)));
                }
            }
        }
        if self.configs.is_empty() {
            return Err(err("no runway configurations".into()));
        }
        let mut config_ids = BTreeSet::new();
        for c in &self.configs {
            if !config_ids.insert(c.id.as_str()) {
                return Err(err(format!("duplicate config `{}`", c.id)));
            }
            if c.runways.is_empty() {
                return Err(err(format!("config `{}` has no active runway", c.id)));
            }
            for a in &c.runways {
                if !runway_ids.contains(a.runway.as_str()) {
                    return Err(err(format!("config `{}` uses unknown runway `{}`", c.id, a.runway)));
                }
            }
            if !self.static_capacity.contains_key(&c.id) {
                return Err(err(format!("no static capacity for config `{}`", c.id)));
            }
        }
        if !config_ids.contains(self.default_rc.as_str()) {
            return Err(err(format!("default_rc `{}` is not a config", self.default_rc)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub sectors: Vec<SectorInfo>,
    pub airports: Vec<AirportTopology>,
}

impl Network {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let mut ids = BTreeSet::new();
        for s in &self.sectors {
            if !ids.insert(s.id.as_str()) {
                return Err(TopologyError::DuplicateSector(s.id.clone()));
            }
        }
        for a in &self.airports {
            a.validate(&ids)?;
        }
        Ok(())
    }

    pub fn sector_ids(&self) -> Vec<String> {
        self.sectors.iter().map(|s| s.id.clone()).collect()
    }

    pub fn airport_ids(&self) -> Vec<String> {
        self.airports.iter().map(|a| a.id.clone()).collect()
    }

    pub fn station_of(&self, sector: &str) -> Option<&str> {
        self.sectors
            .iter()
            .find(|s| s.id == sector)
            .map(|s| s.station.as_str())
    }

    pub fn airport(&self, id: &str) -> Option<&AirportTopology> {
        self.airports.iter().find(|a| a.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_runway_airport() -> AirportTopology {
        AirportTopology {
            id: "FRA".into(),
            station: "EDDF".into(),
            runways: vec![
                Runway {
                    id: "R1".into(),
                    arrival_sectors: vec!["A1".into(), "A2".into()],
                    departure_sectors: vec!["D1".into()],
                },
                Runway {
                    id: "R2".into(),
                    arrival_sectors: vec!["A2".into(), "A3".into()],
                    departure_sectors: vec!["D2".into()],
                },
            ],
            configs: vec![
                RunwayConfig {
                    id: "EAST".into(),
                    runways: vec![
                        ActiveRunway { runway: "R1".into(), mode: RunwayMode::Both },
                        ActiveRunway { runway: "R2".into(), mode: RunwayMode::Arrivals },
                    ],
                },
                RunwayConfig {
                    id: "WEST".into(),
                    runways: vec![ActiveRunway { runway: "R2".into(), mode: RunwayMode::Both }],
                },
            ],
            default_rc: "EAST".into(),
            static_capacity: [
                ("EAST".to_string(), StaticCapacity { arrivals: 40.0, departures: 20.0 }),
                ("WEST".to_string(), StaticCapacity { arrivals: 30.0, departures: 25.0 }),
            ]
            .into_iter()
            .collect(),
        }
    }

    #[test]
    fn shared_sectors_counted_once() {
        let a = two_runway_airport();
        assert_eq!(a.arrival_sectors("EAST"), vec!["A1", "A2", "A3"]);
        assert_eq!(a.departure_sectors("EAST"), vec!["D1"]);
        assert_eq!(a.arrival_sectors("WEST"), vec!["A2", "A3"]);
        assert!(a.arrival_sectors("NONE").is_empty());
    }

    #[test]
    fn validation() {
        let a = two_runway_airport();
        let known: BTreeSet<&str> = ["A1", "A2", "A3", "D1", "D2"].into();
        a.validate(&known).unwrap();
        let fewer: BTreeSet<&str> = ["A1", "A2", "D1", "D2"].into();
        assert!(a.validate(&fewer).is_err());
        let mut b = a.clone();
        b.static_capacity.remove("WEST");
        assert!(b.validate(&known).is_err());
    }
}
