//! Periodic health probing. Two consecutive failed probes mark a service
//! DOWN; a service with a DOWN (or DEGRADED) dependency is DEGRADED.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use aeroflow_core::airport_service::SectorPredictions;
use aeroflow_core::metar::TimedObservation;
use aeroflow_core::pipeline::Target;
use aeroflow_core::SectorService;

use crate::registry::{Registry, ServiceStatus};

pub const DEFAULT_INTERVAL: Duration = Duration::from_secs(10);
pub const FAILURES_TO_DOWN: u32 = 2;

pub trait Probe: Send + Sync {
    fn probe(&self) -> bool;
}

impl<F: Fn() -> bool + Send + Sync> Probe for F {
    fn probe(&self) -> bool {
        self()
    }
}

pub struct HealthMonitor {
    registry: Arc<Registry>,
    probes: Mutex<BTreeMap<String, Arc<dyn Probe>>>,
    failures: Mutex<BTreeMap<String, u32>>,
    interval: Duration,
}

impl HealthMonitor {
    pub fn new(registry: Arc<Registry>, interval: Duration) -> Self {
        Self {
            registry,
            probes: Mutex::new(BTreeMap::new()),
            failures: Mutex::new(BTreeMap::new()),
            interval,
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    pub fn add_probe(&self, service: &str, probe: Arc<dyn Probe>) {
        self.probes
            .lock()
            .expect("probe lock poisoned")
            .insert(service.to_string(), probe);
    }

    /// Runs every probe once and publishes the resulting statuses in a
    /// single registry update.
    pub fn probe_once(&self) -> BTreeMap<String, ServiceStatus> {
        let probes: Vec<(String, Arc<dyn Probe>)> = self
            .probes
            .lock()
            .expect("probe lock poisoned")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut failures = self.failures.lock().expect("failure lock poisoned");
        let mut own: BTreeMap<String, ServiceStatus> = BTreeMap::new();
        for (name, probe) in probes {
            let count = failures.entry(name.clone()).or_insert(0);
            if probe.probe() {
                *count = 0;
            } else {
                *count += 1;
            }
            let status = if *count >= FAILURES_TO_DOWN {
                ServiceStatus::Down
            } else {
                ServiceStatus::Up
            };
            own.insert(name, status);
        }
        drop(failures);

        let services = self.registry.list();
        let mut status: BTreeMap<String, ServiceStatus> = services
            .iter()
            .map(|d| (d.name.clone(), own.get(&d.name).copied().unwrap_or(ServiceStatus::Up)))
            .collect();
        // Propagate degradation along dependency edges until stable; the
        // graph is acyclic so this terminates within |services| passes.
        for _ in 0..services.len() {
            let mut changed = false;
            for d in &services {
                if status[&d.name] != ServiceStatus::Up {
                    continue;
                }
                let impaired = d
                    .dependencies
                    .iter()
                    .any(|dep| status.get(dep).is_some_and(|s| *s != ServiceStatus::Up));
                if impaired {
                    status.insert(d.name.clone(), ServiceStatus::Degraded);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        self.registry.set_statuses(&status);
        status
    }

    /// Probes on a fixed cadence until the returned task is aborted.
    pub fn spawn(self: Arc<Self>) -> tokio::task::JoinHandle<()> {
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(self.interval);
            loop {
                tick.tick().await;
                let me = self.clone();
                // Probes may block; keep them off the async workers.
                let _ = tokio::task::spawn_blocking(move || me.probe_once()).await;
            }
        })
    }
}

/// The sector service as seen by its consumers: it can be taken offline
/// (simulating a stopped process), and calls are refused while the
/// registry reports it DOWN.
pub struct SectorHost {
    pub name: String,
    pub service: Arc<SectorService>,
    registry: Arc<Registry>,
    online: AtomicBool,
}

impl SectorHost {
    pub fn new(name: &str, service: Arc<SectorService>, registry: Arc<Registry>) -> Self {
        Self {
            name: name.to_string(),
            service,
            registry,
            online: AtomicBool::new(true),
        }
    }

    pub fn set_online(&self, online: bool) {
        self.online.store(online, Ordering::SeqCst);
    }

    pub fn is_online(&self) -> bool {
        self.online.load(Ordering::SeqCst)
    }

    /// Liveness as a probe would see it: online and serving predictors.
    pub fn probe(&self) -> bool {
        self.is_online() && !self.service.snapshot().is_empty()
    }

    fn reported_down(&self) -> bool {
        matches!(self.registry.health(&self.name), Ok(ServiceStatus::Down))
    }
}

impl SectorPredictions<f64> for SectorHost {
    fn predict(
        &self,
        sector: &str,
        target: Target,
        bucket_start: i64,
        weather: &TimedObservation,
    ) -> Result<f64, String> {
        if !self.is_online() {
            return Err(format!("{} is unreachable", self.name));
        }
        if self.reported_down() {
            return Err(format!("{} is marked DOWN", self.name));
        }
        self.service
            .predict_sector(sector, target, bucket_start, weather)
            .map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{Layer, ServiceDescriptor};

    #[test]
    fn two_failures_mark_down_and_degrade_consumer() {
        let reg = Arc::new(Registry::new());
        reg.register(ServiceDescriptor::new("sector", Layer::MicroService, "x", &[])).unwrap();
        reg.register(ServiceDescriptor::new("airport", Layer::HigherLevel, "x", &["sector"])).unwrap();
        let up = Arc::new(AtomicBool::new(true));
        let mon = HealthMonitor::new(reg.clone(), DEFAULT_INTERVAL);
        let flag = up.clone();
        mon.add_probe("sector", Arc::new(move || flag.load(Ordering::SeqCst)));

        mon.probe_once();
        assert_eq!(reg.health("airport").unwrap(), ServiceStatus::Up);
        up.store(false, Ordering::SeqCst);
        mon.probe_once();
        assert_eq!(reg.health("sector").unwrap(), ServiceStatus::Up);
        mon.probe_once();
        assert_eq!(reg.health("sector").unwrap(), ServiceStatus::Down);
        assert_eq!(reg.health("airport").unwrap(), ServiceStatus::Degraded);
        up.store(true, Ordering::SeqCst);
        mon.probe_once();
        assert_eq!(reg.health("sector").unwrap(), ServiceStatus::Up);
        assert_eq!(reg.health("airport").unwrap(), ServiceStatus::Up);
    }
}
