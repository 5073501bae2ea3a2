//! Measurement ingestion, per-ad median aggregation and train/test splits.
//!
//! Two CSV layouts are understood:
//!
//! * measurement CSV: `ad_id,device_id,sample_index,baseline_energy,ad_rendering_energy`
//!   followed by every parameter in canonical order, one row per sample;
//! * dataset CSV: `ad_id,device_id,nEad` followed by every parameter, one row
//!   per aggregated (ad, device) pair.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{EnergyMeasurement, NormalizedAdEnergy};
use crate::params::{AdRenderMetrics, Param};

pub const MEASUREMENT_KEY_COLUMNS: [&str; 5] =
    ["ad_id", "device_id", "sample_index", "baseline_energy", "ad_rendering_energy"];
pub const DATASET_KEY_COLUMNS: [&str; 3] = ["ad_id", "device_id", "nEad"];

/// One parsed line of a measurement CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub measurement: EnergyMeasurement,
    pub metrics: AdRenderMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub ad_id: String,
    pub device_id: String,
    pub metrics: AdRenderMetrics,
    pub nead: NormalizedAdEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Ingested,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

impl Dataset {
    /// Fails on duplicate (ad_id, device_id) pairs.
    pub fn new(samples: Vec<LabeledSample>, provenance: Provenance, seed: Option<u64>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert((s.ad_id.as_str(), s.device_id.as_str())) {
                return Err(Error::Domain(format!(
                    "duplicate sample for ad `{}` on device `{}`",
                    s.ad_id, s.device_id
                )));
            }
        }
        Ok(Self { samples, provenance, seed })
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.nead.0).collect()
    }

    /// Column of one parameter; absent values are a resolution error.
    pub fn column(&self, p: Param) -> Result<Vec<f64>> {
        self.samples.iter().map(|s| s.metrics.value(p)).collect()
    }

    /// Distinct device ids in first-seen order.
    pub fn devices(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.device_id.as_str()))
            .map(|s| s.device_id.clone())
            .collect()
    }

    pub fn filter_device(&self, device: &str) -> Dataset {
        Dataset {
            samples: self.samples.iter().filter(|s| s.device_id == device).cloned().collect(),
            provenance: self.provenance,
            seed: self.seed,
        }
    }

    /// Re-applies median aggregation to already aggregated samples.
    pub fn reaggregate(&self) -> Result<Dataset> {
        let groups = group_by_key(self.samples.iter().map(|s| ((s.ad_id.clone(), s.device_id.clone()), s)));
        let samples = groups
            .into_iter()
            .map(|((ad_id, device_id), members)| {
                let metrics = median_metrics(members.iter().map(|s| &s.metrics));
                let nead = median(members.iter().map(|s| s.nead.0).collect());
                LabeledSample { ad_id, device_id, metrics, nead: NormalizedAdEnergy(nead) }
            })
            .collect();
        Dataset::new(samples, self.provenance, self.seed)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let header: Vec<&str> = DATASET_KEY_COLUMNS
            .iter()
            .copied()
            .chain(Param::ALL.iter().map(|p| p.name()))
            .collect();
        wr.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let mut rec = vec![s.ad_id.clone(), s.device_id.clone(), fmt_f64(s.nead.0)];
            for &p in Param::ALL {
                rec.push(s.metrics.get(p).map(fmt_f64).unwrap_or_default());
            }
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Schema(format!("{other:?}")),
    }
}

fn group_by_key<K, V, I>(items: I) -> Vec<(K, Vec<V>)>
where
    K: std::hash::Hash + Eq + Clone,
    I: IntoIterator<Item = (K, V)>,
{
    let mut index: HashMap<K, usize> = HashMap::new();
    let mut groups: Vec<(K, Vec<V>)> = Vec::new();
    for (k, v) in items {
        match index.get(&k) {
            Some(&i) => groups[i].1.push(v),
            None => {
                index.insert(k.clone(), groups.len());
                groups.push((k, vec![v]));
            }
        }
    }
    groups
}

/// Median; an even count yields the mean of the two central values.
pub fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty(), "median of empty set");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn median_metrics<'a, I>(records: I) -> AdRenderMetrics
where
    I: IntoIterator<Item = &'a AdRenderMetrics>,
{
    let records: Vec<&AdRenderMetrics> = records.into_iter().collect();
    let mut out = AdRenderMetrics::empty();
    for &p in Param::ALL {
        let vals: Vec<f64> = records.iter().filter_map(|m| m.get(p)).collect();
        if !vals.is_empty() {
            out.set(p, median(vals));
        }
    }
    out
}

struct Header {
    key: Vec<usize>,
    params: Vec<usize>,
}

fn resolve_header(headers: &csv::StringRecord, keys: &[&str]) -> Result<Header> {
    let pos = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let key = keys.iter().map(|k| pos(k)).collect::<Result<Vec<_>>>()?;
    let params = Param::ALL.iter().map(|p| pos(p.name())).collect::<Result<Vec<_>>>()?;
    Ok(Header { key, params })
}

fn parse_cell(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| Error::Row {
        line,
        message: format!("column `{name}`: cannot parse `{raw}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Row { line, message: format!("column `{name}`: value must be finite") });
    }
    Ok(v)
}

fn parse_params(rec: &csv::StringRecord, header: &Header, line: u64) -> Result<AdRenderMetrics> {
    let mut m = AdRenderMetrics::empty();
    for (&p, &idx) in Param::ALL.iter().zip(&header.params) {
        let v = parse_cell(rec, idx, p.name(), line)?;
        if v < 0.0 {
            return Err(Error::Row { line, message: format!("column `{p}`: negative value {v}") });
        }
        m.set(p, v);
    }
    Ok(m)
}

fn read_records<R: Read>(input: R) -> Result<(csv::StringRecord, Vec<(u64, csv::StringRecord)>)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rd.headers().map_err(csv_err)?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(Error::Schema("empty input: no header row".into()));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row { line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok((headers, rows))
}

/// Parses a measurement CSV into one raw row per data line.
pub fn parse_measurement_csv<R: Read>(input: R) -> Result<Vec<RawRow>> {
    let (headers, records) = read_records(input)?;
    let header = resolve_header(&headers, &MEASUREMENT_KEY_COLUMNS)?;
    records
        .iter()
        .map(|(line, rec)| {
            let line = *line;
            let text = |i: usize| rec.get(header.key[i]).unwrap_or("").trim().to_string();
            let sample_index = text(2).parse::<u32>().map_err(|_| Error::Row {
                line,
                message: format!("column `sample_index`: cannot parse `{}` as an integer", text(2)),
            })?;
            let measurement = EnergyMeasurement {
                ad_id: text(0),
                device_id: text(1),
                sample_index,
                baseline_energy: parse_cell(rec, header.key[3], "baseline_energy", line)?,
                ad_rendering_energy: parse_cell(rec, header.key[4], "ad_rendering_energy", line)?,
            };
            Ok(RawRow { measurement, metrics: parse_params(rec, &header, line)? })
        })
        .collect()
}

pub fn write_measurement_csv<W: Write>(rows: &[RawRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let header: Vec<&str> = MEASUREMENT_KEY_COLUMNS
        .iter()
        .copied()
        .chain(Param::ALL.iter().map(|p| p.name()))
        .collect();
    wr.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let m = &r.measurement;
        let mut rec = vec![
            m.ad_id.clone(),
            m.device_id.clone(),
            m.sample_index.to_string(),
            fmt_f64(m.baseline_energy),
            fmt_f64(m.ad_rendering_energy),
        ];
        rec.extend(Param::ALL.iter().map(|&p| r.metrics.get(p).map(fmt_f64).unwrap_or_default()));
        wr.write_record(&rec).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Parses a dataset CSV (already aggregated, `nEad` column).
pub fn parse_dataset_csv<R: Read>(input: R, provenance: Provenance) -> Result<Dataset> {
    let (headers, records) = read_records(input)?;
    let header = resolve_header(&headers, &DATASET_KEY_COLUMNS)?;
    let samples = records
        .iter()
        .map(|(line, rec)| {
            let text = |i: usize| rec.get(header.key[i]).unwrap_or("").trim().to_string();
            Ok(LabeledSample {
                ad_id: text(0),
                device_id: text(1),
                nead: NormalizedAdEnergy(parse_cell(rec, header.key[2], "nEad", *line)?),
                metrics: parse_params(rec, &header, *line)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, provenance, None)
}

/// Reads either CSV layout, choosing by the presence of an `nEad` column.
/// Measurement files are aggregated on the way in.
pub fn load_csv<R: Read>(mut input: R) -> Result<Dataset> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    let first_line = buf.split(|&b| b == b'\n').next().unwrap_or(&[]);
    let is_dataset = String::from_utf8_lossy(first_line).split(',').any(|h| h.trim() == "nEad");
    if is_dataset {
        parse_dataset_csv(buf.as_slice(), Provenance::Ingested)
    } else {
        aggregate_samples(&parse_measurement_csv(buf.as_slice())?)
    }
}

/// Collapses the samples of each (ad_id, device_id) into per-field medians.
///
/// nEad is computed per sample first and its median taken.
pub fn aggregate_samples(rows: &[RawRow]) -> Result<Dataset> {
    let groups = group_by_key(
        rows.iter()
            .map(|r| ((r.measurement.ad_id.clone(), r.measurement.device_id.clone()), r)),
    );
    let mut samples = Vec::with_capacity(groups.len());
    for ((ad_id, device_id), members) in groups {
        let mut indices = HashSet::new();
        let mut neads = Vec::with_capacity(members.len());
        for r in &members {
            if !indices.insert(r.measurement.sample_index) {
                return Err(Error::Domain(format!(
                    "duplicate sample_index {} for ad `{ad_id}` on device `{device_id}`",
                    r.measurement.sample_index
                )));
            }
            neads.push(r.measurement.normalized()?.0);
        }
        samples.push(LabeledSample {
            metrics: median_metrics(members.iter().map(|r| &r.metrics)),
            nead: NormalizedAdEnergy(median(neads)),
            ad_id,
            device_id,
        });
    }
    Dataset::new(samples, Provenance::Ingested, None)
}

/// Shuffles with `seed` and cuts at `ceil(n * train_fraction)`.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Domain(format!("cannot split a dataset of {n} samples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64 * train_fraction).ceil() as usize).min(n);
    let pick = |idx: &[usize]| Dataset {
        samples: idx.iter().map(|&i| dataset.samples[i].clone()).collect(),
        provenance: dataset.provenance,
        seed: dataset.seed,
    };
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}
