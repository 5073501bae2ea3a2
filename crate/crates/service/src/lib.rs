//! Real-time ad energy estimation service.
//!
//! Tags post raw rendering parameters; the service evaluates the loaded model,
//! assigns a grade, appends the result to a local log and answers. The model
//! can be replaced at runtime without dropping requests.

pub mod api;
pub mod engine;
pub mod error;
pub mod http;
pub mod log;

pub use api::{EstimateRecord, EstimateRequest, EstimateResponse, ModelInfo};
pub use engine::{Engine, LoadedModel, REQUEST_BUDGET};
pub use error::ServiceError;
pub use http::{router, serve};
pub use log::{scan_stats, LogConfig, LogStats, LogWriter, SyncPolicy};
