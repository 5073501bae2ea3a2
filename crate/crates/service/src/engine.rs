use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use arc_swap::ArcSwapOption;
use carbontag_core::artifact::{import_artifact, verify_checksum};
use carbontag_core::{AdRenderMetrics, LabelBins, LinearModel, Param};

use crate::api::{EstimateRecord, EstimateRequest, EstimateResponse, ModelInfo};
use crate::error::ServiceError;
use crate::log::LogWriter;

/// Hard cap on server-side processing per request.
pub const REQUEST_BUDGET: Duration = Duration::from_millis(100);

/// An imported artifact ready to serve.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: LinearModel,
    pub bins: LabelBins,
    pub checksum: String,
    pub required: Vec<Param>,
}

impl LoadedModel {
    pub fn from_artifact(bytes: &[u8]) -> Result<Self, ServiceError> {
        let checksum = verify_checksum(bytes).map_err(ServiceError::InvalidArtifact)?;
        let (model, bins) = import_artifact(bytes).map_err(ServiceError::InvalidArtifact)?;
        let required = model.required_params();
        Ok(Self { model, bins, checksum, required })
    }

    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            model_version: self.model.version.clone(),
            features: self.model.features().map(|f| f.name()).collect(),
            parameters: self.required.iter().map(|p| p.name().to_string()).collect(),
            checksum: self.checksum.clone(),
        }
    }

    /// Validates the request against this model and evaluates it. No I/O.
    pub fn estimate(&self, req: &EstimateRequest) -> Result<(f64, carbontag_core::Grade), ServiceError> {
        let metrics = request_metrics(req)?;
        for &p in &self.required {
            if metrics.get(p).is_none() {
                return Err(ServiceError::Validation {
                    field: p.name().to_string(),
                    message: "required by the loaded model but missing".into(),
                });
            }
        }
        let nead = self.model.predict(&metrics).map_err(|e| ServiceError::Internal(e.to_string()))?;
        if !nead.0.is_finite() {
            return Err(ServiceError::Internal("estimate is not finite".into()));
        }
        let label = self.bins.label(nead).map_err(|e| ServiceError::Internal(e.to_string()))?;
        Ok((nead.0, label.grade))
    }
}

/// Unknown names and negative or non-finite values are rejected.
pub fn request_metrics(req: &EstimateRequest) -> Result<AdRenderMetrics, ServiceError> {
    let mut m = AdRenderMetrics::empty();
    for (name, &v) in &req.parameters {
        let p = Param::from_name(name).ok_or_else(|| ServiceError::Validation {
            field: name.clone(),
            message: "unknown parameter".into(),
        })?;
        if !v.is_finite() || v < 0.0 {
            return Err(ServiceError::Validation {
                field: name.clone(),
                message: format!("must be finite and non-negative, got {v}"),
            });
        }
        m.set(p, v);
    }
    Ok(m)
}

fn now_micros() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0)
}

/// Shared state behind every request handler.
pub struct Engine {
    model: ArcSwapOption<LoadedModel>,
    log: LogWriter,
    budget: Duration,
}

impl Engine {
    pub fn new(log: LogWriter) -> Self {
        Self { model: ArcSwapOption::empty(), log, budget: REQUEST_BUDGET }
    }

    pub fn with_budget(mut self, budget: Duration) -> Self {
        self.budget = budget;
        self
    }

    pub fn log_dir(&self) -> &std::path::Path {
        self.log.dir()
    }

    /// Swaps in a new model. An invalid artifact leaves the current one active.
    pub fn load_model(&self, artifact: &[u8]) -> Result<Arc<LoadedModel>, ServiceError> {
        let loaded = Arc::new(LoadedModel::from_artifact(artifact)?);
        self.model.store(Some(loaded.clone()));
        log::info!("model {} active ({} features)", loaded.model.version, loaded.model.terms().len());
        Ok(loaded)
    }

    pub fn current_model(&self) -> Option<Arc<LoadedModel>> {
        self.model.load_full()
    }

    /// Estimates and persists. The response is returned only after its record
    /// is committed to the log.
    pub async fn handle_estimate(&self, request: EstimateRequest) -> Result<EstimateResponse, ServiceError> {
        let started = Instant::now();
        let budget_ms = self.budget.as_millis() as u64;
        match tokio::time::timeout(self.budget, self.process(request, started)).await {
            Ok(res) => res,
            Err(_) => Err(ServiceError::Timeout(budget_ms)),
        }
    }

    async fn process(&self, request: EstimateRequest, started: Instant) -> Result<EstimateResponse, ServiceError> {
        // One snapshot for the whole request, so a concurrent swap cannot mix versions.
        let model = self.model.load_full().ok_or(ServiceError::NoModel)?;
        let (nead_estimate, label) = model.estimate(&request)?;
        let mut record = EstimateRecord {
            timestamp: now_micros(),
            request,
            response: EstimateResponse {
                nead_estimate,
                label,
                model_version: model.model.version.clone(),
                processing_time: 0,
            },
        };
        record.response.processing_time = started.elapsed().as_micros() as u64;
        self.log.append(&record).await.map_err(|e| ServiceError::Persistence(e.to_string()))?;
        let mut response = record.response;
        response.processing_time = started.elapsed().as_micros() as u64;
        Ok(response)
    }
}
