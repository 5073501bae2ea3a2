//! Seeded synthetic datasets with a known linear ground truth.
//!
//! Each parameter is drawn from a [`FeatureDistribution`]. Distributions are
//! looked up by `kind` in a [`DistributionRegistry`], so configs can name any
//! registered strategy and callers can register their own.

use std::collections::BTreeMap;
use std::fmt::Debug;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{Dataset, LabeledSample, Provenance};
use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::metrics::NormalizedAdEnergy;
use crate::params::{AdRenderMetrics, Param, ParamKind};

/// A non-negative sampling strategy for one parameter.
pub trait FeatureDistribution: Debug + Send + Sync {
    fn kind(&self) -> &'static str;
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    fn mean(&self) -> f64;
    /// E[X²]
    fn second_moment(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct LogNormalDist {
    pub mu: f64,
    pub sigma: f64,
    inner: LogNormal<f64>,
}

impl LogNormalDist {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let inner = LogNormal::new(mu, sigma).map_err(|e| Error::Config(format!("lognormal: {e}")))?;
        Ok(Self { mu, sigma, inner })
    }
}

impl FeatureDistribution for LogNormalDist {
    fn kind(&self) -> &'static str {
        "lognormal"
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner.sample(rng)
    }
    fn mean(&self) -> f64 {
        (self.mu + self.sigma * self.sigma / 2.0).exp()
    }
    fn second_moment(&self) -> f64 {
        (2.0 * self.mu + 2.0 * self.sigma * self.sigma).exp()
    }
}

#[derive(Debug, Clone)]
pub struct PoissonDist {
    pub lambda: f64,
    inner: Poisson<f64>,
}

impl PoissonDist {
    pub fn new(lambda: f64) -> Result<Self> {
        let inner = Poisson::new(lambda).map_err(|e| Error::Config(format!("poisson: {e}")))?;
        Ok(Self { lambda, inner })
    }
}

impl FeatureDistribution for PoissonDist {
    fn kind(&self) -> &'static str {
        "poisson"
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner.sample(rng)
    }
    fn mean(&self) -> f64 {
        self.lambda
    }
    fn second_moment(&self) -> f64 {
        self.lambda + self.lambda * self.lambda
    }
}

#[derive(Debug, Clone)]
pub struct UniformDist {
    pub low: f64,
    pub high: f64,
    inner: Uniform<f64>,
}

impl UniformDist {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if low < 0.0 {
            return Err(Error::Config("uniform: low must be non-negative".into()));
        }
        let inner = Uniform::new(low, high).map_err(|e| Error::Config(format!("uniform: {e}")))?;
        Ok(Self { low, high, inner })
    }
}

impl FeatureDistribution for UniformDist {
    fn kind(&self) -> &'static str {
        "uniform"
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner.sample(rng)
    }
    fn mean(&self) -> f64 {
        (self.low + self.high) / 2.0
    }
    fn second_moment(&self) -> f64 {
        (self.low * self.low + self.low * self.high + self.high * self.high) / 3.0
    }
}

#[derive(Debug, Clone)]
pub struct ConstantDist(pub f64);

impl FeatureDistribution for ConstantDist {
    fn kind(&self) -> &'static str {
        "constant"
    }
    fn sample(&self, _rng: &mut dyn RngCore) -> f64 {
        self.0
    }
    fn mean(&self) -> f64 {
        self.0
    }
    fn second_moment(&self) -> f64 {
        self.0 * self.0
    }
}

pub type DistributionBuilder = fn(&Value) -> Result<Box<dyn FeatureDistribution>>;

fn num(v: &Value, key: &str) -> Result<f64> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Config(format!("distribution is missing numeric `{key}`")))
}

/// Maps distribution kinds to constructors taking the JSON parameter object.
pub struct DistributionRegistry {
    builders: BTreeMap<String, DistributionBuilder>,
}

impl Default for DistributionRegistry {
    fn default() -> Self {
        let mut r = Self { builders: BTreeMap::new() };
        r.register("lognormal", |v| Ok(Box::new(LogNormalDist::new(num(v, "mu")?, num(v, "sigma")?)?)));
        r.register("poisson", |v| Ok(Box::new(PoissonDist::new(num(v, "lambda")?)?)));
        r.register("uniform", |v| Ok(Box::new(UniformDist::new(num(v, "low")?, num(v, "high")?)?)));
        r.register("constant", |v| {
            let c = num(v, "value")?;
            if c < 0.0 {
                return Err(Error::Config("constant: value must be non-negative".into()));
            }
            Ok(Box::new(ConstantDist(c)))
        });
        r
    }
}

impl DistributionRegistry {
    pub fn register(&mut self, kind: &str, builder: DistributionBuilder) {
        self.builders.insert(kind.to_string(), builder);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    /// Builds from `{"kind": "...", ...params}`.
    pub fn build(&self, spec: &Value) -> Result<Box<dyn FeatureDistribution>> {
        let kind = spec
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Config("distribution needs a string `kind`".into()))?;
        let builder = self
            .builders
            .get(kind)
            .ok_or_else(|| Error::Config(format!("unknown distribution kind `{kind}`")))?;
        builder(spec)
    }
}

/// Default distribution by unit: Poisson for counts, log-normal otherwise.
pub fn default_distribution(p: Param) -> Box<dyn FeatureDistribution> {
    let d: Box<dyn FeatureDistribution> = match p.kind() {
        ParamKind::Count => Box::new(PoissonDist::new(5.0).expect("valid")),
        ParamKind::Bytes => Box::new(LogNormalDist::new(40_000f64.ln(), 0.75).expect("valid")),
        ParamKind::Millis => Box::new(LogNormalDist::new(50f64.ln(), 0.75).expect("valid")),
        ParamKind::Pixels => Box::new(LogNormalDist::new(1_500_000f64.ln(), 0.3).expect("valid")),
    };
    d
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intercept: f64,
    /// Feature name (`a` or `a×b`) to coefficient.
    pub coefficients: BTreeMap<String, f64>,
}

/// The on-disk synthetic config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub ground_truth: GroundTruth,
    #[serde(default)]
    pub noise_sigma: f64,
    pub n: usize,
    /// Parameter name to `{"kind": ..., ...}`; unlisted parameters use defaults.
    #[serde(default)]
    pub distributions: BTreeMap<String, Value>,
    /// Devices assigned round-robin; a single `synthetic` device when empty.
    #[serde(default)]
    pub devices: Vec<String>,
}

impl SyntheticConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn terms(&self) -> Result<Vec<(FeatureSpec, f64)>> {
        self.ground_truth
            .coefficients
            .iter()
            .map(|(name, &c)| {
                if !c.is_finite() {
                    return Err(Error::Config(format!("coefficient for `{name}` must be finite")));
                }
                Ok((FeatureSpec::parse(name)?, c))
            })
            .collect()
    }

    pub fn resolve_distributions(
        &self,
        registry: &DistributionRegistry,
    ) -> Result<Vec<Box<dyn FeatureDistribution>>> {
        for name in self.distributions.keys() {
            Param::parse(name)?;
        }
        Param::ALL
            .iter()
            .map(|p| match self.distributions.get(p.name()) {
                Some(spec) => registry.build(spec),
                None => Ok(default_distribution(*p)),
            })
            .collect()
    }

    /// Noise-free target for a metrics record.
    pub fn signal(&self, metrics: &AdRenderMetrics) -> Result<f64> {
        self.terms()?
            .iter()
            .try_fold(self.ground_truth.intercept, |acc, (spec, c)| Ok(acc + c * spec.evaluate(metrics)?))
    }
}

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    generate_with_registry(config, seed, &DistributionRegistry::default())
}

pub fn generate_with_registry(
    config: &SyntheticConfig,
    seed: u64,
    registry: &DistributionRegistry,
) -> Result<Dataset> {
    if config.n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::Config("noise_sigma must be finite and non-negative".into()));
    }
    let terms = config.terms()?;
    let dists = config.resolve_distributions(registry)?;
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let default_device = ["synthetic".to_string()];
    let devices: &[String] = if config.devices.is_empty() { &default_device } else { &config.devices };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = config.n.to_string().len().max(6);
    let mut samples = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut metrics = AdRenderMetrics::empty();
        for (&p, d) in Param::ALL.iter().zip(&dists) {
            metrics.set(p, d.sample(&mut rng));
        }
        let signal = terms
            .iter()
            .try_fold(config.ground_truth.intercept, |acc, (spec, c)| Ok::<_, Error>(acc + c * spec.evaluate(&metrics)?))?;
        let eps = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        samples.push(LabeledSample {
            ad_id: format!("ad-{i:0width$}"),
            device_id: devices[i % devices.len()].clone(),
            metrics,
            nead: NormalizedAdEnergy((signal + eps).max(-1.0)),
        });
    }
    Dataset::new(samples, Provenance::Synthetic, Some(seed))
}
