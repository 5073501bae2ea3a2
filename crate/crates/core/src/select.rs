//! Feature selection: correlation filter, VIF pruning, interaction
//! expansion and near-constant elimination.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{generate_interactions, FeatureSpec};
use crate::linalg::{least_squares, spd_inverse};
use crate::params::{Param, DEFAULT_CANDIDATES};

/// R² at or above `1 - PERFECT_FIT` counts as perfect collinearity.
pub const PERFECT_FIT: f64 = 1e-12;

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Domain("pearson needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("x"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("y"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Population variance (divides by n), accumulated with Welford's update.
pub fn variance(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Domain("variance of an empty vector".into()));
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let d = v - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (v - mean);
    }
    Ok((m2 / x.len() as f64).max(0.0))
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

fn r2_to_vif(r2: f64) -> f64 {
    let r2 = r2.max(0.0);
    if r2 >= 1.0 - PERFECT_FIT {
        f64::INFINITY
    } else {
        1.0 / (1.0 - r2)
    }
}

/// VIF of column `j`: `1 / (1 - R²)` of `j` regressed (with intercept) on
/// every other column. Perfect collinearity gives `f64::INFINITY`.
pub fn vif(design: &[Vec<f64>], j: usize) -> Result<f64> {
    let p = design.len();
    if p < 2 {
        return Err(Error::Domain("vif needs at least 2 columns".into()));
    }
    if j >= p {
        return Err(Error::Domain(format!("column {j} out of range")));
    }
    let n = design[0].len();
    if design.iter().any(|c| c.len() != n) {
        return Err(Error::Domain("columns differ in length".into()));
    }
    if n <= p {
        return Err(Error::Domain(format!("vif needs more rows than columns ({n} ≤ {p})")));
    }
    if is_constant(&design[j]) {
        return Err(Error::Domain(format!("column {j} is constant")));
    }
    Ok(auxiliary_vif(design, j))
}

fn auxiliary_vif(design: &[Vec<f64>], j: usize) -> f64 {
    let target = &design[j];
    if is_constant(target) {
        return f64::INFINITY;
    }
    let others: Vec<Vec<f64>> =
        design.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, c)| c.clone()).collect();
    let fit = least_squares(&others, target);
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (i, &t) in target.iter().enumerate() {
        let pred = fit.intercept + others.iter().zip(&fit.coefficients).map(|(c, b)| c[i] * b).sum::<f64>();
        ss_res += (t - pred).powi(2);
        ss_tot += (t - mean).powi(2);
    }
    r2_to_vif(1.0 - ss_res / ss_tot)
}

/// VIF of every column at once.
///
/// Uses the diagonal of the inverse correlation matrix; falls back to one
/// auxiliary regression per column when that matrix is numerically singular.
/// Constant columns are collinear with the intercept and get infinity.
pub fn vif_all(design: &[Vec<f64>]) -> Vec<f64> {
    let p = design.len();
    if p == 1 {
        return vec![if is_constant(&design[0]) { f64::INFINITY } else { 1.0 }];
    }
    let live: Vec<usize> = (0..p).filter(|&j| !is_constant(&design[j])).collect();
    let mut out = vec![f64::INFINITY; p];
    if live.len() == 1 {
        out[live[0]] = 1.0;
        return out;
    }
    if live.is_empty() {
        return out;
    }
    let n = design[0].len() as f64;
    let centered: Vec<Vec<f64>> = live
        .iter()
        .map(|&j| {
            let c = &design[j];
            let m = c.iter().sum::<f64>() / n;
            let d: Vec<f64> = c.iter().map(|v| v - m).collect();
            let s = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let q = live.len();
    let mut corr = vec![vec![0.0; q]; q];
    for a in 0..q {
        corr[a][a] = 1.0;
        for b in 0..a {
            let r: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            corr[a][b] = r;
            corr[b][a] = r;
        }
    }
    match spd_inverse(&corr) {
        Some(inv) if (0..q).all(|k| inv[k][k].is_finite() && inv[k][k] < 1.0 / PERFECT_FIT) => {
            for (k, &j) in live.iter().enumerate() {
                // 1 - R²_j = 1 / inv_jj
                out[j] = r2_to_vif(1.0 - 1.0 / inv[k][k]);
            }
        }
        _ => {
            for j in 0..p {
                out[j] = auxiliary_vif(design, j);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub candidate_fields: Vec<Param>,
    pub corr_threshold: f64,
    pub vif_threshold: f64,
    pub variance_threshold: f64,
    pub max_interaction_order: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            candidate_fields: DEFAULT_CANDIDATES.to_vec(),
            corr_threshold: 0.8,
            vif_threshold: 10.0,
            variance_threshold: 0.01,
            max_interaction_order: 3,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_fields.is_empty() {
            return Err(Error::Config("candidate_fields is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.corr_threshold) {
            return Err(Error::Config("corr_threshold must be in [0, 1]".into()));
        }
        if self.vif_threshold.is_nan() || self.vif_threshold < 1.0 {
            return Err(Error::Config("vif_threshold must be at least 1".into()));
        }
        if self.variance_threshold.is_nan() || self.variance_threshold < 0.0 {
            return Err(Error::Config("variance_threshold must be non-negative".into()));
        }
        if !(1..=3).contains(&self.max_interaction_order) {
            return Err(Error::Config("max_interaction_order must be 1, 2 or 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LowCorrelation,
    HighVif,
    LowVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub feature: FeatureSpec,
    pub reason: RejectReason,
}

/// Outcome of [`select_features`], keyed by canonical feature name.
///
/// VIF entries for selected features are computed on the final selection;
/// for VIF rejections they hold the value at the time of removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub selected: Vec<FeatureSpec>,
    pub rejected: Vec<Rejection>,
    #[serde(with = "float_map")]
    pub vif_table: BTreeMap<String, f64>,
    #[serde(with = "float_map")]
    pub correlation_table: BTreeMap<String, f64>,
    #[serde(with = "float_map")]
    pub variance_table: BTreeMap<String, f64>,
}

impl SelectionReport {
    pub fn rejected_for(&self, reason: RejectReason) -> impl Iterator<Item = &FeatureSpec> {
        self.rejected.iter().filter(move |r| r.reason == reason).map(|r| &r.feature)
    }
}

/// JSON has no infinity; infinite VIFs are written as the string `"inf"`.
mod float_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let conv: BTreeMap<&String, Num> = m
            .iter()
            .map(|(k, &v)| {
                let n = if v.is_finite() {
                    Num::F(v)
                } else if v > 0.0 {
                    Num::S("inf".into())
                } else if v < 0.0 {
                    Num::S("-inf".into())
                } else {
                    Num::S("nan".into())
                };
                (k, n)
            })
            .collect();
        conv.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let raw = BTreeMap::<String, Num>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, n)| {
                let v = match n {
                    Num::F(f) => f,
                    Num::S(s) => s.parse().map_err(serde::de::Error::custom)?,
                };
                Ok((k, v))
            })
            .collect()
    }
}

struct Candidate {
    spec: FeatureSpec,
    name: String,
    column: Vec<f64>,
}

impl Candidate {
    fn new(spec: FeatureSpec, dataset: &Dataset) -> Result<Self> {
        let column = dataset
            .samples()
            .iter()
            .map(|s| spec.evaluate(&s.metrics))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { name: spec.name(), spec, column })
    }
}

struct Pipeline<'a> {
    config: &'a SelectionConfig,
    target: Vec<f64>,
    report: SelectionReport,
}

impl Pipeline<'_> {
    fn reject(&mut self, c: Candidate, reason: RejectReason) {
        self.report.rejected.push(Rejection { feature: c.spec, reason });
    }

    fn correlation_filter(&mut self, cands: Vec<Candidate>) -> Vec<Candidate> {
        let mut keep = Vec::new();
        for c in cands {
            // constant columns have no defined correlation; treat as 0
            let r = pearson(&c.column, &self.target).unwrap_or(0.0);
            self.report.correlation_table.insert(c.name.clone(), r);
            if r.abs() >= self.config.corr_threshold {
                keep.push(c);
            } else {
                self.reject(c, RejectReason::LowCorrelation);
            }
        }
        keep
    }

    /// Drops the highest-VIF feature until all are within threshold. Ties go
    /// against the lexicographically greater name.
    fn vif_filter(&mut self, mut cands: Vec<Candidate>) -> Vec<Candidate> {
        while cands.len() > 1 {
            let cols: Vec<Vec<f64>> = cands.iter().map(|c| c.column.clone()).collect();
            let vifs = vif_all(&cols);
            let worst = (0..cands.len())
                .max_by(|&a, &b| {
                    vifs[a].total_cmp(&vifs[b]).then_with(|| cands[a].name.cmp(&cands[b].name))
                })
                .expect("non-empty");
            if vifs[worst] <= self.config.vif_threshold {
                break;
            }
            let c = cands.remove(worst);
            self.report.vif_table.insert(c.name.clone(), vifs[worst]);
            self.reject(c, RejectReason::HighVif);
        }
        cands
    }

    fn variance_filter(&mut self, cands: Vec<Candidate>) -> Vec<Candidate> {
        let mut keep = Vec::new();
        for c in cands {
            let v = variance(&c.column).unwrap_or(0.0);
            self.report.variance_table.insert(c.name.clone(), v);
            if v >= self.config.variance_threshold {
                keep.push(c);
            } else {
                self.reject(c, RejectReason::LowVariance);
            }
        }
        keep
    }
}

/// Runs correlation → VIF → interactions (re-filtered) → variance.
pub fn select_features(dataset: &Dataset, config: &SelectionConfig) -> Result<SelectionReport> {
    config.validate()?;
    if dataset.len() < 2 {
        return Err(Error::Domain("feature selection needs at least 2 samples".into()));
    }
    let mut pipe = Pipeline {
        config,
        target: dataset.targets(),
        report: SelectionReport {
            selected: vec![],
            rejected: vec![],
            vif_table: BTreeMap::new(),
            correlation_table: BTreeMap::new(),
            variance_table: BTreeMap::new(),
        },
    };

    let bases = generate_interactions(&config.candidate_fields, 1)?
        .into_iter()
        .map(|s| Candidate::new(s, dataset))
        .collect::<Result<Vec<_>>>()?;
    let bases = pipe.correlation_filter(bases);
    let bases = pipe.vif_filter(bases);

    let surviving: Vec<Param> = bases.iter().map(|c| c.spec.factors()[0]).collect();
    let interactions = generate_interactions(&surviving, config.max_interaction_order)?
        .into_iter()
        .filter(|s| s.order() > 1)
        .map(|s| Candidate::new(s, dataset))
        .collect::<Result<Vec<_>>>()?;
    let interactions = pipe.correlation_filter(interactions);

    let mut pool = bases;
    pool.extend(interactions);
    let pool = pipe.vif_filter(pool);
    let selected = pipe.variance_filter(pool);

    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let cols: Vec<Vec<f64>> = selected.iter().map(|c| c.column.clone()).collect();
    for (c, v) in selected.iter().zip(vif_all(&cols)) {
        pipe.report.vif_table.insert(c.name.clone(), v);
    }
    pipe.report.selected = selected.into_iter().map(|c| c.spec).collect();
    Ok(pipe.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabeledSample, Provenance};
    use crate::metrics::NormalizedAdEnergy;
    use crate::params::AdRenderMetrics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pearson_identities() {
        let x = [1.0, 5.0, 2.0, 8.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn pearson_textbook_value() {
        // Σx=6 Σy=7 Σxy=17 Σx²=14 Σy²=21, n=3
        let num = 3.0 * 17.0 - 6.0 * 7.0;
        let den = ((3.0f64 * 14.0 - 36.0) * (3.0 * 21.0 - 49.0)).sqrt();
        let expected = num / den;
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance(&[3.0; 10]).unwrap(), 0.0);
        assert_eq!(variance(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(variance(&[]).is_err());
    }

    #[test]
    fn variance_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-50.0..150.0)).collect();
        let m = x.iter().sum::<f64>() / 1000.0;
        let two_pass = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 1000.0;
        let v = variance(&x).unwrap();
        assert!(((v - two_pass) / two_pass).abs() < 1e-10);
    }

    #[test]
    fn vif_orthogonal_is_one() {
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let d = vec![a, b];
        assert!((vif(&d, 0).unwrap() - 1.0).abs() < 1e-9);
        assert!((vif(&d, 1).unwrap() - 1.0).abs() < 1e-9);
        for v in vif_all(&d) {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn vif_duplicate_is_infinite() {
        let a = vec![1.0, 3.0, 2.0, 7.0, 4.0, 5.0];
        let d = vec![a.clone(), a, vec![0.3, 0.1, 0.4, 0.1, 0.5, 0.9]];
        assert_eq!(vif(&d, 0).unwrap(), f64::INFINITY);
        let all = vif_all(&d);
        assert_eq!(all[0], f64::INFINITY);
        assert_eq!(all[1], f64::INFINITY);
        assert!(all[2].is_finite());
    }

    #[test]
    fn vif_errors() {
        assert!(vif(&[vec![1.0, 2.0, 3.0]], 0).is_err());
        assert!(vif(&[vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]], 0).is_err());
        assert!(vif(&[vec![1.0, 2.0], vec![2.0, 1.0]], 0).is_err());
    }

    #[test]
    fn vif_all_agrees_with_auxiliary_regressions() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let base: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..1.0)).collect();
        let d: Vec<Vec<f64>> = (0..5)
            .map(|k| base.iter().map(|b| b * k as f64 * 0.3 + rng.random_range(0.0..1.0)).collect())
            .collect();
        let fast = vif_all(&d);
        for j in 0..5 {
            let slow = vif(&d, j).unwrap();
            assert!(((fast[j] - slow) / slow).abs() < 1e-9, "{j}: {} vs {slow}", fast[j]);
        }
    }

    fn dataset_from(cols: &[(Param, Vec<f64>)], y: &[f64]) -> Dataset {
        let samples = y
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut m = AdRenderMetrics::zeros();
                for (p, c) in cols {
                    m.set(*p, c[i]);
                }
                LabeledSample { ad_id: format!("a{i}"), device_id: "d".into(), metrics: m, nead: NormalizedAdEnergy(t) }
            })
            .collect();
        Dataset::new(samples, Provenance::Synthetic, None).unwrap()
    }

    #[test]
    fn filters_disabled_keep_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fields = [Param::TcpMean, Param::DnsMean, Param::ItImg];
        let cols: Vec<(Param, Vec<f64>)> =
            fields.iter().map(|&p| (p, (0..200).map(|_| rng.random_range(0.0..10.0)).collect())).collect();
        let y: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let ds = dataset_from(&cols, &y);
        let cfg = SelectionConfig {
            candidate_fields: fields.to_vec(),
            corr_threshold: 0.0,
            vif_threshold: f64::INFINITY,
            variance_threshold: 0.0,
            max_interaction_order: 1,
        };
        let rep = select_features(&ds, &cfg).unwrap();
        assert_eq!(rep.selected.len(), 3);
        assert!(rep.rejected.is_empty());
    }

    #[test]
    fn duplicate_columns_tie_break_by_name() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let ds = dataset_from(&[(Param::TcpMean, x.clone()), (Param::DnsMean, x)], &y);
        let cfg = SelectionConfig {
            candidate_fields: vec![Param::TcpMean, Param::DnsMean],
            max_interaction_order: 1,
            ..Default::default()
        };
        let rep = select_features(&ds, &cfg).unwrap();
        assert_eq!(rep.selected, vec![FeatureSpec::single(Param::DnsMean)]);
        assert_eq!(rep.rejected_for(RejectReason::HighVif).cloned().collect::<Vec<_>>(), vec![FeatureSpec::single(Param::TcpMean)]);
        assert_eq!(rep.vif_table["tcp_mean"], f64::INFINITY);
    }

    #[test]
    fn everything_rejected_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
        let ds = dataset_from(&[(Param::TcpMean, x)], &y);
        let cfg = SelectionConfig { candidate_fields: vec![Param::TcpMean], ..Default::default() };
        assert!(matches!(select_features(&ds, &cfg), Err(Error::EmptySelection)));
    }

    #[test]
    fn low_variance_is_rejected_last() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..0.1)).collect();
        let z: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| 30.0 * a + b).collect();
        let ds = dataset_from(&[(Param::TcpMean, x), (Param::DnsMean, z)], &y);
        let cfg = SelectionConfig {
            candidate_fields: vec![Param::TcpMean, Param::DnsMean],
            corr_threshold: 0.0,
            max_interaction_order: 1,
            ..Default::default()
        };
        let rep = select_features(&ds, &cfg).unwrap();
        assert_eq!(rep.selected, vec![FeatureSpec::single(Param::DnsMean)]);
        assert_eq!(rep.rejected[0].reason, RejectReason::LowVariance);
    }

    #[test]
    fn report_json_round_trips_infinity() {
        let mut rep = SelectionReport {
            selected: vec![FeatureSpec::single(Param::TcpMean)],
            rejected: vec![Rejection { feature: FeatureSpec::single(Param::DnsMean), reason: RejectReason::HighVif }],
            vif_table: BTreeMap::new(),
            correlation_table: BTreeMap::new(),
            variance_table: BTreeMap::new(),
        };
        rep.vif_table.insert("dns_mean".into(), f64::INFINITY);
        rep.vif_table.insert("tcp_mean".into(), 1.0);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains(r#""dns_mean":"inf""#));
        assert!(json.contains(r#""reason":"high_vif""#));
        let back: SelectionReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }
}
