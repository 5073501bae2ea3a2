//! Ordinary least squares estimator for normalized ad energy.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::linalg::least_squares;
use crate::metrics::NormalizedAdEnergy;
use crate::params::AdRenderMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingProvenance {
    pub dataset_id: String,
    pub sample_count: usize,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub feature: FeatureSpec,
    pub coefficient: f64,
}

/// `intercept + Σ coefficient · feature`, evaluated in term order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    terms: Vec<Term>,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_on: Option<TrainingProvenance>,
}

impl LinearModel {
    pub fn new(intercept: f64, terms: Vec<(FeatureSpec, f64)>, version: impl Into<String>) -> Result<Self> {
        if !intercept.is_finite() {
            return Err(Error::Domain("intercept must be finite".into()));
        }
        let mut out: Vec<Term> = Vec::with_capacity(terms.len());
        for (feature, coefficient) in terms {
            if !coefficient.is_finite() {
                return Err(Error::Domain(format!("coefficient of `{feature}` must be finite")));
            }
            if out.iter().any(|t| t.feature == feature) {
                return Err(Error::Domain(format!("duplicate feature `{feature}`")));
            }
            out.push(Term { feature, coefficient });
        }
        Ok(Self { intercept, terms: out, version: version.into(), trained_on: None })
    }

    /// Re-checks the invariants after deserialization.
    pub fn validated(self) -> Result<Self> {
        let trained_on = self.trained_on.clone();
        let terms = self.terms.into_iter().map(|t| (t.feature, t.coefficient)).collect();
        let mut m = Self::new(self.intercept, terms, self.version)?;
        m.trained_on = trained_on;
        Ok(m)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn features(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.terms.iter().map(|t| &t.feature)
    }

    pub fn coefficient(&self, feature: &FeatureSpec) -> Option<f64> {
        self.terms.iter().find(|t| &t.feature == feature).map(|t| t.coefficient)
    }

    /// Distinct base parameters referenced by any feature.
    pub fn required_params(&self) -> Vec<crate::params::Param> {
        let mut ps: Vec<_> = self.terms.iter().flat_map(|t| t.feature.factors().iter().copied()).collect();
        ps.sort();
        ps.dedup();
        ps
    }

    pub fn predict(&self, metrics: &AdRenderMetrics) -> Result<NormalizedAdEnergy> {
        let mut acc = self.intercept;
        for t in &self.terms {
            acc += t.coefficient * t.feature.evaluate(metrics)?;
        }
        Ok(NormalizedAdEnergy(acc))
    }
}

pub fn predict(model: &LinearModel, metrics: &AdRenderMetrics) -> Result<NormalizedAdEnergy> {
    model.predict(metrics)
}

/// Fits nEad on `features` with an intercept.
pub fn fit_ols(dataset: &Dataset, features: &[FeatureSpec]) -> Result<LinearModel> {
    let n = dataset.len();
    let p = features.len();
    if n <= p || n == 0 {
        return Err(Error::InsufficientData { samples: n, features: p });
    }
    for (i, f) in features.iter().enumerate() {
        if features[..i].contains(f) {
            return Err(Error::Singular(vec![f.name()]));
        }
    }
    let columns = features
        .iter()
        .map(|f| dataset.samples().iter().map(|s| f.evaluate(&s.metrics)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let y = dataset.targets();
    let fit = least_squares(&columns, &y);
    if fit.rank < p {
        return Err(Error::Singular(fit.dependent.iter().map(|&j| features[j].name()).collect()));
    }
    LinearModel::new(
        fit.intercept,
        features.iter().cloned().zip(fit.coefficients).collect(),
        "v1",
    )
}

fn check_lengths(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(Error::Domain(format!(
            "length mismatch: {} predictions vs {} actuals",
            predicted.len(),
            actual.len()
        )));
    }
    Ok(())
}

/// Coefficient of determination. A constant `actual` gives 1 for a perfect
/// prediction and negative infinity otherwise.
pub fn r2(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted, actual)?;
    if actual.len() < 2 {
        return Err(Error::Domain("r2 needs at least 2 points".into()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_res: f64 = predicted.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum();
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Ok(if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY });
    }
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(predicted, actual)?;
    if actual.is_empty() {
        return Err(Error::Domain("rmse of empty vectors".into()));
    }
    let mse = predicted.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum::<f64>() / actual.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `None` when undefined (fewer than 2 samples, or a constant target
    /// that is mispredicted).
    pub r2: Option<f64>,
    pub rmse: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub overall: ValidationReport,
    pub per_device: Vec<ValidationReport>,
}

fn report(model: &LinearModel, dataset: &Dataset, device_id: Option<String>) -> Result<ValidationReport> {
    let predicted = dataset
        .samples()
        .iter()
        .map(|s| model.predict(&s.metrics).map(|p| p.0))
        .collect::<Result<Vec<_>>>()?;
    let actual = dataset.targets();
    let r2 = if actual.len() >= 2 { Some(r2(&predicted, &actual)?).filter(|v| v.is_finite()) } else { None };
    Ok(ValidationReport { r2, rmse: rmse(&predicted, &actual)?, n: actual.len(), device_id })
}

/// Overall R²/RMSE plus one report per device.
pub fn validate(model: &LinearModel, dataset: &Dataset) -> Result<ValidationSummary> {
    if dataset.is_empty() {
        return Err(Error::Domain("cannot validate on an empty dataset".into()));
    }
    let overall = report(model, dataset, None)?;
    let per_device = dataset
        .devices()
        .into_iter()
        .map(|d| report(model, &dataset.filter_device(&d), Some(d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationSummary { overall, per_device })
}
