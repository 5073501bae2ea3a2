//! Model features: single parameters and products of two or three of them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{AdRenderMetrics, Param};

/// Separator between factors in a feature name.
pub const PRODUCT_SEPARATOR: char = '×';

pub const MAX_ORDER: usize = 3;

/// A feature as a product of 1–3 distinct base parameters.
///
/// Factors are kept sorted by wire name so that a product has exactly one
/// spelling regardless of how it was written.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureSpec {
    factors: Vec<Param>,
}

impl FeatureSpec {
    pub fn new(mut factors: Vec<Param>) -> Result<Self> {
        if factors.is_empty() || factors.len() > MAX_ORDER {
            return Err(Error::Config(format!(
                "a feature needs 1 to {MAX_ORDER} factors, got {}",
                factors.len()
            )));
        }
        factors.sort_by_key(|p| p.name());
        if factors.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("feature factors must be distinct".into()));
        }
        Ok(Self { factors })
    }

    pub fn single(p: Param) -> Self {
        Self { factors: vec![p] }
    }

    /// Parses `a×b×c`; `*` is accepted as an alternative separator.
    pub fn parse(name: &str) -> Result<Self> {
        let factors = name
            .split([PRODUCT_SEPARATOR, '*'])
            .map(|s| Param::parse(s.trim()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(factors)
    }

    pub fn factors(&self) -> &[Param] {
        &self.factors
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn name(&self) -> String {
        let names: Vec<&str> = self.factors.iter().map(|p| p.name()).collect();
        names.join(&PRODUCT_SEPARATOR.to_string())
    }

    /// Product of the factor values in `metrics`.
    pub fn evaluate(&self, metrics: &AdRenderMetrics) -> Result<f64> {
        self.factors.iter().try_fold(1.0, |acc, &p| Ok(acc * metrics.value(p)?))
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureSpecRepr {
    name: String,
    factors: Vec<Param>,
}

impl Serialize for FeatureSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FeatureSpecRepr { name: self.name(), factors: self.factors.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = FeatureSpecRepr::deserialize(d)?;
        let spec = FeatureSpec::new(repr.factors).map_err(serde::de::Error::custom)?;
        if spec.name() != repr.name {
            return Err(serde::de::Error::custom(format!(
                "feature name `{}` does not match its factors (`{}`)",
                repr.name,
                spec.name()
            )));
        }
        Ok(spec)
    }
}

/// Evaluates a feature on a metrics record.
pub fn evaluate_feature(spec: &FeatureSpec, metrics: &AdRenderMetrics) -> Result<f64> {
    spec.evaluate(metrics)
}

/// The base features plus every unordered product of 2..=`max_order` of them.
///
/// Output order: by order, then lexicographic over the input order.
pub fn generate_interactions(fields: &[Param], max_order: usize) -> Result<Vec<FeatureSpec>> {
    if !(1..=MAX_ORDER).contains(&max_order) {
        return Err(Error::Config(format!("max interaction order must be 1..=3, got {max_order}")));
    }
    for (i, p) in fields.iter().enumerate() {
        if fields[..i].contains(p) {
            return Err(Error::Config(format!("duplicate base field `{p}`")));
        }
    }
    let n = fields.len();
    let mut out: Vec<FeatureSpec> = fields.iter().map(|&p| FeatureSpec::single(p)).collect();
    if max_order >= 2 {
        for i in 0..n {
            for j in i + 1..n {
                out.push(FeatureSpec::new(vec![fields[i], fields[j]])?);
            }
        }
    }
    if max_order >= 3 {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    out.push(FeatureSpec::new(vec![fields[i], fields[j], fields[k]])?);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::DEFAULT_CANDIDATES;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn interaction_counts() {
        let three = [Param::TcpMean, Param::DnsMean, Param::ScreenSize];
        assert_eq!(generate_interactions(&three, 3).unwrap().len(), 7);
        assert_eq!(generate_interactions(&three[..1], 3).unwrap().len(), 1);
        let all = generate_interactions(&DEFAULT_CANDIDATES, 3).unwrap();
        assert_eq!(all.len(), binom(15, 1) + binom(15, 2) + binom(15, 3));
        assert_eq!(all.len(), 575);
        let unique: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), 575);
    }

    #[test]
    fn interaction_errors() {
        assert!(generate_interactions(&[Param::TcpMean, Param::TcpMean], 2).is_err());
        assert!(generate_interactions(&[Param::TcpMean], 4).is_err());
        assert!(generate_interactions(&[Param::TcpMean], 0).is_err());
    }

    #[test]
    fn canonical_name_is_order_independent() {
        let a = FeatureSpec::new(vec![Param::ScreenSize, Param::AdNavigationDuration]).unwrap();
        let b = FeatureSpec::parse("screen_size×ad_navigation_duration").unwrap();
        let c = FeatureSpec::parse("ad_navigation_duration*screen_size").unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(a.name(), "ad_navigation_duration×screen_size");
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(FeatureSpec::parse("tcp_mean×tcp_mean").is_err());
        assert!(FeatureSpec::parse("nope").is_err());
        assert!(FeatureSpec::parse("tcp_mean×dns_mean×screen_size×entries").is_err());
    }

    #[test]
    fn evaluate_products() {
        let m = AdRenderMetrics::empty()
            .with(Param::TcpMean, 7.0)
            .with(Param::DnsMean, 2.0)
            .with(Param::RequestMean, 3.0);
        assert_eq!(FeatureSpec::single(Param::TcpMean).evaluate(&m).unwrap(), 7.0);
        assert_eq!(FeatureSpec::parse("dns_mean×request_mean").unwrap().evaluate(&m).unwrap(), 6.0);
        let err = FeatureSpec::parse("tcp_mean×screen_size").unwrap().evaluate(&m).unwrap_err();
        assert!(matches!(err, Error::FeatureResolution(ref f) if f == "screen_size"));
    }

    #[test]
    fn table_row_triple_product() {
        let m = AdRenderMetrics::zeros()
            .with(Param::AdNavigationDuration, 812.5)
            .with(Param::ScreenSize, 1920.0 * 1080.0)
            .with(Param::RequestMean, 13.25);
        let spec = FeatureSpec::parse("ad_navigation_duration screen_size request_mean".replace(' ', "×").as_str())
            .unwrap();
        let expected = 812.5 * 2_073_600.0 * 13.25;
        assert_eq!(evaluate_feature(&spec, &m).unwrap(), expected);
    }

    #[test]
    fn serde_round_trip_checks_name() {
        let spec = FeatureSpec::parse("tcp_mean×dns_mean").unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"name":"dns_mean×tcp_mean","factors":["dns_mean","tcp_mean"]}"#);
        assert_eq!(serde_json::from_str::<FeatureSpec>(&json).unwrap(), spec);
        let bad = r#"{"name":"tcp_mean","factors":["dns_mean"]}"#;
        assert!(serde_json::from_str::<FeatureSpec>(bad).is_err());
    }
}
