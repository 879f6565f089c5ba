//! HTTP service and command-line tool around `prokno-core`.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod http;
pub mod ops;

pub use artifacts::Artifacts;
pub use config::{MetricDefaults, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use http::{router, AppState};
