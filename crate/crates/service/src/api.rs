//! Wire types shared by the HTTP endpoints and the result log.

use std::collections::BTreeMap;

use carbontag_core::Grade;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRequest {
    pub ad_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_profile: Option<String>,
    /// Base parameter name to raw value. Interaction products are computed
    /// server side.
    pub parameters: BTreeMap<String, f64>,
    pub tag_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResponse {
    #[serde(rename = "nEad_estimate")]
    pub nead_estimate: f64,
    pub label: Grade,
    pub model_version: String,
    /// Microseconds spent server side, persistence included.
    pub processing_time: u64,
}

/// One line of the result log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    /// Microseconds since the Unix epoch.
    pub timestamp: u64,
    pub request: EstimateRequest,
    pub response: EstimateResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_version: String,
    pub features: Vec<String>,
    pub parameters: Vec<String>,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}
