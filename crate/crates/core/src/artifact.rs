//! Compact model artifact for in-browser evaluation.
//!
//! The artifact is a single-line JSON object with lexicographically sorted
//! keys, no whitespace, and every float written with 17 significant digits
//! (`d.dddddddddddddddde±x`), which reproduces the binary value exactly:
//!
//! ```text
//! {"checksum":"<32 hex>","coefficients":[..],"feature_specs":[{"factors":[..],"name":".."}],
//!  "format_version":"v1","intercept":..,"label_bins":[7 floats],"model_version":".."}
//! ```
//!
//! The checksum is FNV-1a 128 over the same document with the `checksum`
//! member removed, i.e. over `{` followed by everything after the checksum
//! member's trailing comma.

use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::features::FeatureSpec;
use crate::metrics::LabelBins;
use crate::regression::LinearModel;

pub const FORMAT_VERSION: &str = "v1";
pub const SIZE_BUDGET: usize = 10 * 1024;

const CHECKSUM_PREFIX: &str = "{\"checksum\":\"";

const FNV128_OFFSET: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV128_PRIME: u128 = 0x0000000001000000000000000000013B;

/// FNV-1a, 128-bit.
pub fn fnv1a_128(bytes: &[u8]) -> u128 {
    bytes.iter().fold(FNV128_OFFSET, |h, &b| (h ^ b as u128).wrapping_mul(FNV128_PRIME))
}

fn push_f64(out: &mut String, v: f64) {
    out.push_str(&format!("{v:.16e}"));
}

fn push_str(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}

fn push_list<T>(out: &mut String, items: &[T], mut f: impl FnMut(&mut String, &T)) {
    out.push('[');
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        f(out, item);
    }
    out.push(']');
}

/// Canonical document without the checksum member.
fn payload(model: &LinearModel, bins: &LabelBins, format_version: &str) -> String {
    let terms = model.terms();
    let mut s = String::with_capacity(128 + terms.len() * 160);
    s.push_str("{\"coefficients\":");
    push_list(&mut s, terms, |s, t| push_f64(s, t.coefficient));
    s.push_str(",\"feature_specs\":");
    push_list(&mut s, terms, |s, t| {
        s.push_str("{\"factors\":");
        push_list(s, t.feature.factors(), |s, p| push_str(s, p.name()));
        s.push_str(",\"name\":");
        push_str(s, &t.feature.name());
        s.push('}');
    });
    s.push_str(",\"format_version\":");
    push_str(&mut s, format_version);
    s.push_str(",\"intercept\":");
    push_f64(&mut s, model.intercept);
    s.push_str(",\"label_bins\":");
    push_list(&mut s, bins.edges(), |s, &e| push_f64(s, e));
    s.push_str(",\"model_version\":");
    push_str(&mut s, &model.version);
    s.push('}');
    s
}

fn seal(payload: &str) -> Vec<u8> {
    let sum = fnv1a_128(payload.as_bytes());
    let mut out = format!("{CHECKSUM_PREFIX}{sum:032x}\",");
    out.push_str(&payload[1..]);
    out.into_bytes()
}

/// Serializes a model and its label scale; fails when over [`SIZE_BUDGET`].
pub fn export_artifact(model: &LinearModel, bins: &LabelBins) -> Result<Vec<u8>> {
    let bytes = seal(&payload(model, bins, FORMAT_VERSION));
    if bytes.len() > SIZE_BUDGET {
        return Err(Error::SizeBudget { size: bytes.len(), budget: SIZE_BUDGET });
    }
    Ok(bytes)
}

/// Like [`export_artifact`] with an arbitrary format tag and no size check.
#[doc(hidden)]
pub fn export_with_format(model: &LinearModel, bins: &LabelBins, format_version: &str) -> Vec<u8> {
    seal(&payload(model, bins, format_version))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[allow(dead_code)]
    checksum: String,
    coefficients: Vec<f64>,
    feature_specs: Vec<FeatureSpec>,
    #[allow(dead_code)]
    format_version: String,
    intercept: f64,
    label_bins: [f64; 7],
    model_version: String,
}

/// Verifies the checksum of a sealed artifact and returns the hex digest.
pub fn verify_checksum(bytes: &[u8]) -> Result<String> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Integrity("artifact is not UTF-8".into()))?;
    let rest = text
        .strip_prefix(CHECKSUM_PREFIX)
        .ok_or_else(|| Error::Integrity("artifact does not start with a checksum member".into()))?;
    if rest.len() < 34 || !rest.is_char_boundary(32) {
        return Err(Error::Integrity("truncated checksum".into()));
    }
    let (hex, tail) = rest.split_at(32);
    let body = tail
        .strip_prefix("\",")
        .ok_or_else(|| Error::Integrity("malformed checksum member".into()))?;
    let expected = u128::from_str_radix(hex, 16)
        .ok()
        .filter(|_| hex.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)))
        .ok_or_else(|| Error::Integrity("checksum is not 32 lowercase hex digits".into()))?;
    let mut payload = String::with_capacity(body.len() + 1);
    payload.push('{');
    payload.push_str(body);
    let actual = fnv1a_128(payload.as_bytes());
    if actual != expected {
        return Err(Error::Integrity(format!("checksum mismatch: stored {hex}, computed {actual:032x}")));
    }
    Ok(hex.to_string())
}

/// Parses and verifies an artifact produced by [`export_artifact`].
pub fn import_artifact(bytes: &[u8]) -> Result<(LinearModel, LabelBins)> {
    verify_checksum(bytes)?;
    let value: Value = serde_json::from_slice(bytes).map_err(|e| Error::Integrity(e.to_string()))?;
    match value.get("format_version").and_then(Value::as_str) {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(Error::Version(other.to_string())),
        None => return Err(Error::Integrity("missing format_version".into())),
    }
    let doc: Document = serde_json::from_value(value).map_err(|e| Error::Integrity(e.to_string()))?;
    if doc.coefficients.len() != doc.feature_specs.len() {
        return Err(Error::Integrity(format!(
            "{} coefficients for {} features",
            doc.coefficients.len(),
            doc.feature_specs.len()
        )));
    }
    let bins = LabelBins::new(doc.label_bins)?;
    let model = LinearModel::new(doc.intercept, doc.feature_specs.into_iter().zip(doc.coefficients).collect(), doc.model_version)?;
    Ok((model, bins))
}
