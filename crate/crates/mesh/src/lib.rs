//! Compositional services layer: a registry of services by architectural
//! layer, periodic health probing, and JSON-over-HTTP endpoints for the
//! sector and airport services.

pub mod health;
pub mod registry;
pub mod server;
pub mod wire;

pub use health::{HealthMonitor, SectorHost};
pub use registry::{Layer, Registry, RegistryError, ServiceDescriptor, ServiceStatus};
pub use server::{router, serve, AppState, ServeConfig, ServeError};
