//! Energy estimation for online ad rendering.
//!
//! Raw lab samples are aggregated into per-ad records, features are chosen by
//! a correlation/VIF/variance pipeline, a linear estimator of normalized ad
//! energy is fitted by least squares, and the result is exported as a small
//! checksummed artifact that both the estimation service and in-browser tags
//! can evaluate.

pub mod artifact;
pub mod dataset;
pub mod error;
pub mod features;
pub mod linalg;
pub mod metrics;
pub mod params;
pub mod regression;
pub mod select;
pub mod synth;

pub use artifact::{export_artifact, import_artifact};
pub use dataset::{aggregate_samples, parse_measurement_csv, split, Dataset, LabeledSample, Provenance, RawRow};
pub use error::{Error, Result};
pub use features::{evaluate_feature, generate_interactions, FeatureSpec};
pub use metrics::{
    ad_energy, assign_label, global_impact, normalized_ad_energy, EnergyLabel, EnergyMeasurement, Grade,
    ImpactEstimate, LabelBins, NormalizedAdEnergy,
};
pub use params::{AdRenderMetrics, Param};
pub use regression::{fit_ols, predict, r2, rmse, validate, LinearModel, ValidationReport, ValidationSummary};
pub use select::{pearson, select_features, variance, vif, SelectionConfig, SelectionReport};
pub use synth::{generate_synthetic, SyntheticConfig};
