//! Service registry: descriptors keyed by name, kept acyclic and layered.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Architectural layer. A service may only depend on services in the same
/// or a lower layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    InputProcessing,
    MicroService,
    HigherLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ServiceStatus {
    Up,
    Down,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub name: String,
    pub version: String,
    pub layer: Layer,
    /// `host:port/base/path`.
    pub endpoint: String,
    pub dependencies: Vec<String>,
    pub status: ServiceStatus,
}

impl ServiceDescriptor {
    pub fn new(name: &str, layer: Layer, endpoint: &str, dependencies: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            layer,
            endpoint: endpoint.to_string(),
            dependencies: dependencies.iter().map(|s| s.to_string()).collect(),
            status: ServiceStatus::Up,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("registering {0} would create a dependency cycle")]
    CycleDetected(String),
    #[error("{service} ({service_layer:?}) may not depend on {dependency} ({dependency_layer:?})")]
    LayerViolation {
        service: String,
        service_layer: Layer,
        dependency: String,
        dependency_layer: Layer,
    },
    #[error("unknown service {0}")]
    UnknownService(String),
    #[error("registry file {path}: {message}")]
    Persistence { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegistrationId(pub u64);

#[derive(Debug, Default)]
struct Inner {
    services: BTreeMap<String, (RegistrationId, ServiceDescriptor)>,
    next_id: u64,
}

/// In-process registry; updates are serialized behind a lock.
#[derive(Debug, Default)]
pub struct Registry {
    inner: RwLock<Inner>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a descriptor. Dependencies need not be registered
    /// yet; layering is checked against those that are.
    pub fn register(&self, descriptor: ServiceDescriptor) -> Result<RegistrationId, RegistryError> {
        let mut inner = self.inner.write().expect("registry lock poisoned");
        let mut graph: BTreeMap<&str, &ServiceDescriptor> = inner
            .services
            .iter()
            .map(|(k, (_, d))| (k.as_str(), d))
            .collect();
        graph.insert(&descriptor.name, &descriptor);
        check_layers(&graph, &descriptor)?;
        if has_cycle(&graph) {
            return Err(RegistryError::CycleDetected(descriptor.name.clone()));
        }
        inner.next_id += 1;
        let id = RegistrationId(inner.next_id);
        inner.services.insert(descriptor.name.clone(), (id, descriptor));
        Ok(id)
    }

    pub fn resolve(&self, name: &str) -> Result<ServiceDescriptor, RegistryError> {
        self.inner
            .read()
            .expect("registry lock poisoned")
            .services
            .get(name)
            .map(|(_, d)| d.clone())
            .ok_or_else(|| RegistryError::UnknownService(name.to_string()))
    }

    pub fn health(&self, name: &str) -> Result<ServiceStatus, RegistryError> {
        self.resolve(name).map(|d| d.status)
    }

    pub fn set_status(&self, name: &str, status: ServiceStatus) -> Result<(), RegistryError> {
        let mut inner = self.inner.write().expect("registry lock poisoned");
        let (_, d) = inner
            .services
            .get_mut(name)
            .ok_or_else(|| RegistryError::UnknownService(name.to_string()))?;
        d.status = status;
        Ok(())
    }

    /// Applies several status changes under one lock so readers never see
    /// a partial update.
    pub fn set_statuses(&self, statuses: &BTreeMap<String, ServiceStatus>) {
        let mut inner = self.inner.write().expect("registry lock poisoned");
        for (name, status) in statuses {
            if let Some((_, d)) = inner.services.get_mut(name) {
                d.status = *status;
            }
        }
    }

    /// All descriptors sorted by name.
    pub fn list(&self) -> Vec<ServiceDescriptor> {
        self.inner
            .read()
            .expect("registry lock poisoned")
            .services
            .values()
            .map(|(_, d)| d.clone())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        let text = serde_json::to_string_pretty(&self.list()).expect("descriptors serialize");
        fs::write(path, text).map_err(|e| RegistryError::Persistence {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let err = |message: String| RegistryError::Persistence {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let list: Vec<ServiceDescriptor> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let reg = Self::new();
        for d in list {
            reg.register(d)?;
        }
        Ok(reg)
    }
}

fn check_layers(
    graph: &BTreeMap<&str, &ServiceDescriptor>,
    new: &ServiceDescriptor,
) -> Result<(), RegistryError> {
    let violation = |s: &ServiceDescriptor, d: &ServiceDescriptor| RegistryError::LayerViolation {
        service: s.name.clone(),
        service_layer: s.layer,
        dependency: d.name.clone(),
        dependency_layer: d.layer,
    };
    for dep in &new.dependencies {
        if let Some(d) = graph.get(dep.as_str()) {
            if d.layer > new.layer {
                return Err(violation(new, d));
            }
        }
    }
    for s in graph.values() {
        if s.dependencies.contains(&new.name) && new.layer > s.layer {
            return Err(violation(s, new));
        }
    }
    Ok(())
}

fn has_cycle(graph: &BTreeMap<&str, &ServiceDescriptor>) -> bool {
    // Colour-marking DFS; edges to unregistered services are leaves.
    fn visit<'a>(
        n: &'a str,
        graph: &BTreeMap<&'a str, &'a ServiceDescriptor>,
        grey: &mut BTreeSet<&'a str>,
        black: &mut BTreeSet<&'a str>,
    ) -> bool {
        if black.contains(n) {
            return false;
        }
        if !grey.insert(n) {
            return true;
        }
        if let Some(d) = graph.get(n) {
            for dep in &d.dependencies {
                if visit(dep, graph, grey, black) {
                    return true;
                }
            }
        }
        grey.remove(n);
        black.insert(n);
        false
    }
    let mut grey = BTreeSet::new();
    let mut black = BTreeSet::new();
    graph.keys().any(|n| visit(n, graph, &mut grey, &mut black))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_rejected() {
        let r = Registry::new();
        r.register(ServiceDescriptor::new("A", Layer::MicroService, "x", &["B"])).unwrap();
        assert_eq!(
            r.register(ServiceDescriptor::new("B", Layer::MicroService, "x", &["A"])),
            Err(RegistryError::CycleDetected("B".into()))
        );
        assert!(r.resolve("B").is_err());
    }

    #[test]
    fn self_dependency_is_a_cycle() {
        let r = Registry::new();
        assert!(r.register(ServiceDescriptor::new("A", Layer::MicroService, "x", &["A"])).is_err());
    }

    #[test]
    fn micro_service_cannot_depend_upwards() {
        let r = Registry::new();
        r.register(ServiceDescriptor::new("airport", Layer::HigherLevel, "x", &[])).unwrap();
        assert!(matches!(
            r.register(ServiceDescriptor::new("sector", Layer::MicroService, "x", &["airport"])),
            Err(RegistryError::LayerViolation { .. })
        ));
        // Registered in the other order the violation is caught too.
        let r = Registry::new();
        r.register(ServiceDescriptor::new("sector", Layer::MicroService, "x", &["airport"])).unwrap();
        assert!(r.register(ServiceDescriptor::new("airport", Layer::HigherLevel, "x", &[])).is_err());
    }

    #[test]
    fn resolve_returns_latest() {
        let r = Registry::new();
        let d = ServiceDescriptor::new("sector", Layer::MicroService, "127.0.0.1:1/v1", &[]);
        let a = r.register(d.clone()).unwrap();
        assert_eq!(r.resolve("sector").unwrap(), d);
        let mut d2 = d.clone();
        d2.version = "2".into();
        let b = r.register(d2.clone()).unwrap();
        assert!(b > a);
        assert_eq!(r.resolve("sector").unwrap(), d2);
        assert_eq!(r.resolve("nope"), Err(RegistryError::UnknownService("nope".into())));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = Registry::new();
        r.register(ServiceDescriptor::new("sector", Layer::MicroService, "h:1/v1", &[])).unwrap();
        r.register(ServiceDescriptor::new("airport", Layer::HigherLevel, "h:1/v1", &["sector"])).unwrap();
        let p = dir.path().join("registry.json");
        r.save(&p).unwrap();
        assert_eq!(Registry::load(&p).unwrap().list(), r.list());
    }
}
