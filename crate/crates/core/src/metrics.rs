//! Ad energy metrics, the A–G efficiency scale and global impact arithmetic.
//!
//! All energies are kWh.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One lab sample: energy of the idle browser and energy with the ad rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyMeasurement {
    pub ad_id: String,
    pub device_id: String,
    pub sample_index: u32,
    pub baseline_energy: f64,
    pub ad_rendering_energy: f64,
}

impl EnergyMeasurement {
    pub fn normalized(&self) -> Result<NormalizedAdEnergy> {
        if self.ad_rendering_energy < 0.0 {
            return Err(Error::Domain(format!(
                "ad_rendering_energy must be non-negative, got {}",
                self.ad_rendering_energy
            )));
        }
        normalized_ad_energy(self.ad_rendering_energy, self.baseline_energy)
    }
}

/// Dimensionless energy of the rendering process relative to the baseline.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedAdEnergy(pub f64);

impl NormalizedAdEnergy {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_energy_pair(ad_rendering_energy: f64, baseline_energy: f64) -> Result<()> {
    if !ad_rendering_energy.is_finite() || !baseline_energy.is_finite() {
        return Err(Error::Domain("energies must be finite".into()));
    }
    if baseline_energy <= 0.0 {
        return Err(Error::Domain(format!(
            "baseline_energy must be positive, got {baseline_energy}"
        )));
    }
    Ok(())
}

/// Energy attributable to the ad: rendering energy minus baseline.
///
/// Negative results are allowed; they show up when measurement noise exceeds
/// the ad's own consumption.
pub fn ad_energy(ad_rendering_energy: f64, baseline_energy: f64) -> Result<f64> {
    check_energy_pair(ad_rendering_energy, baseline_energy)?;
    Ok(ad_rendering_energy - baseline_energy)
}

pub fn normalized_ad_energy(
    ad_rendering_energy: f64,
    baseline_energy: f64,
) -> Result<NormalizedAdEnergy> {
    let delta = ad_energy(ad_rendering_energy, baseline_energy)?;
    Ok(NormalizedAdEnergy(delta / baseline_energy))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl Grade {
    pub const ALL: [Grade; 7] = [Grade::A, Grade::B, Grade::C, Grade::D, Grade::E, Grade::F, Grade::G];

    pub fn as_str(self) -> &'static str {
        match self {
            Grade::A => "A",
            Grade::B => "B",
            Grade::C => "C",
            Grade::D => "D",
            Grade::E => "E",
            Grade::F => "F",
            Grade::G => "G",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grade::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown grade `{s}`")))
    }
}

/// A grade together with the half-open bin `[bin_lower, bin_upper)` it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLabel {
    pub grade: Grade,
    pub bin_lower: f64,
    /// `f64::INFINITY` for the last grade.
    pub bin_upper: f64,
}

/// Lower edges of the seven grade bins, ascending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelBins(pub [f64; 7]);

impl Default for LabelBins {
    fn default() -> Self {
        LabelBins([0.0, 1.0, 3.0, 6.0, 10.0, 15.0, 25.0])
    }
}

impl LabelBins {
    pub fn new(edges: [f64; 7]) -> Result<Self> {
        if edges[0] != 0.0 {
            return Err(Error::Domain("first bin must start at 0".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("bin edges must be finite and strictly increasing".into()));
        }
        Ok(LabelBins(edges))
    }

    pub fn edges(&self) -> &[f64; 7] {
        &self.0
    }

    pub fn label(&self, nead: NormalizedAdEnergy) -> Result<EnergyLabel> {
        let x = nead.0;
        if !x.is_finite() {
            return Err(Error::Domain(format!("nEad must be finite, got {x}")));
        }
        // Negative values are measurement noise below baseline; they fall in A.
        let idx = self.0.iter().rposition(|&lo| x >= lo).unwrap_or(0);
        Ok(EnergyLabel {
            grade: Grade::ALL[idx],
            bin_lower: self.0[idx],
            bin_upper: self.0.get(idx + 1).copied().unwrap_or(f64::INFINITY),
        })
    }
}

/// Labels a normalized energy on the default A–G scale.
pub fn assign_label(nead: NormalizedAdEnergy) -> Result<EnergyLabel> {
    LabelBins::default().label(nead)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactAssumptions {
    pub per_ad_energy: f64,
    pub ads_per_user_per_day: u64,
    pub user_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactEstimate {
    pub per_user_daily: f64,
    pub global_daily: f64,
    pub global_yearly: f64,
    pub assumptions: ImpactAssumptions,
}

pub const DAYS_PER_YEAR: f64 = 365.0;

/// Scales a per-ad energy up to a population of users.
pub fn global_impact(
    per_ad_energy: f64,
    ads_per_user_per_day: u64,
    user_count: u64,
) -> Result<ImpactEstimate> {
    if !(per_ad_energy.is_finite() && per_ad_energy > 0.0) {
        return Err(Error::Domain(format!("per_ad_energy must be positive, got {per_ad_energy}")));
    }
    if ads_per_user_per_day == 0 || user_count == 0 {
        return Err(Error::Domain("ad and user counts must be positive".into()));
    }
    let per_user_daily = per_ad_energy * ads_per_user_per_day as f64;
    let global_daily = per_user_daily * user_count as f64;
    Ok(ImpactEstimate {
        per_user_daily,
        global_daily,
        global_yearly: global_daily * DAYS_PER_YEAR,
        assumptions: ImpactAssumptions { per_ad_energy, ads_per_user_per_day, user_count },
    })
}
