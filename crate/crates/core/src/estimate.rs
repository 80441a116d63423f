//! Monte Carlo AADTT estimation from one snapshot count.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDateTime;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::factors::{predict_factor, FactorError, FactorModel, TimeKey};
use crate::rng;

pub const KM_PER_MILE: f64 = 1.609344;
pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_REL_SD: f64 = 0.05;
/// Floor applied to sampled factors.
pub const F_MIN: f64 = 0.01;
pub const MAX_REDRAWS: usize = 100;
const CHUNK: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("factor model has no training residuals")]
    NoResiduals,
    #[error("cannot parse length `{0}` (expected e.g. `18km` or `65mi`)")]
    InvalidLength(String),
    #[error("cannot parse speed `{0}` (expected e.g. `90km/h` or `65mph`)")]
    InvalidSpeed(String),
    #[error("no default speed for region `{0}`; pass an explicit speed")]
    UnknownRegion(String),
    #[error("sample count must be positive")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Km,
    Mile,
}

impl LengthUnit {
    pub fn in_km(self) -> f64 {
        match self {
            LengthUnit::Km => 1.0,
            LengthUnit::Mile => KM_PER_MILE,
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "km" | "kilometer" | "kilometers" | "kilometre" | "kilometres" => Some(LengthUnit::Km),
            "mi" | "mile" | "miles" => Some(LengthUnit::Mile),
            _ => None,
        }
    }
}

impl fmt::Display for LengthUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthUnit::Km => "km",
            LengthUnit::Mile => "mi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Length {
    pub value: f64,
    pub unit: LengthUnit,
}

impl Length {
    pub fn new(value: f64, unit: LengthUnit) -> Self {
        Length { value, unit }
    }

    pub fn km(value: f64) -> Self {
        Length::new(value, LengthUnit::Km)
    }

    pub fn miles(value: f64) -> Self {
        Length::new(value, LengthUnit::Mile)
    }

    pub fn to_unit(self, unit: LengthUnit) -> f64 {
        if unit == self.unit {
            self.value
        } else {
            self.value * self.unit.in_km() / unit.in_km()
        }
    }
}

fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E'))
        .unwrap_or(s.len());
    let value = s[..end].parse().ok()?;
    Some((value, s[end..].trim()))
}

impl FromStr for Length {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || EstimateError::InvalidLength(s.to_string());
        let (value, unit) = split_number(s).ok_or_else(err)?;
        let unit = LengthUnit::parse(unit).ok_or_else(err)?;
        if !(value.is_finite() && value > 0.0) {
            return Err(err());
        }
        Ok(Length { value, unit })
    }
}

impl fmt::Display for Length {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.value, self.unit)
    }
}

/// Truncated-normal speed, in `unit` per hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedModel {
    pub v0: f64,
    pub unit: LengthUnit,
    pub rel_sd: f64,
}

impl SpeedModel {
    pub fn new(v0: f64, unit: LengthUnit) -> Result<Self, EstimateError> {
        SpeedModel {
            v0,
            unit,
            rel_sd: DEFAULT_REL_SD,
        }
        .validated()
    }

    pub fn with_rel_sd(self, rel_sd: f64) -> Result<Self, EstimateError> {
        SpeedModel { rel_sd, ..self }.validated()
    }

    fn validated(self) -> Result<Self, EstimateError> {
        if !(self.v0.is_finite() && self.v0 > 0.0) {
            return Err(EstimateError::Domain(format!("mean speed must be positive, got {}", self.v0)));
        }
        if !(self.rel_sd.is_finite() && self.rel_sd >= 0.0) {
            return Err(EstimateError::Domain(format!(
                "relative speed sd must be nonnegative, got {}",
                self.rel_sd
            )));
        }
        Ok(self)
    }

    /// Same physical speed expressed per `unit`.
    pub fn in_unit(self, unit: LengthUnit) -> Self {
        SpeedModel {
            v0: Length::new(self.v0, self.unit).to_unit(unit),
            unit,
            rel_sd: self.rel_sd,
        }
    }
}

impl FromStr for SpeedModel {
    type Err = EstimateError;

    /// `90km/h`, `65mph`, `65 mi/h`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || EstimateError::InvalidSpeed(s.to_string());
        let (value, rest) = split_number(s).ok_or_else(err)?;
        let rest = rest.to_ascii_lowercase();
        let unit = match rest.as_str() {
            "mph" => LengthUnit::Mile,
            "kph" => LengthUnit::Km,
            _ => {
                let base = rest.strip_suffix("/h").ok_or_else(err)?;
                LengthUnit::parse(base).ok_or_else(err)?
            }
        };
        SpeedModel::new(value, unit).map_err(|_| err())
    }
}

/// Built-in mean speeds: NY 65 mi/h, CA 70 mi/h, BR 90 km/h. An override
/// always wins.
pub fn speed_defaults(region: &str, speed_override: Option<SpeedModel>) -> Result<SpeedModel, EstimateError> {
    if let Some(s) = speed_override {
        return Ok(s);
    }
    match region.trim().to_ascii_uppercase().as_str() {
        "NY" => SpeedModel::new(65.0, LengthUnit::Mile),
        "CA" => SpeedModel::new(70.0, LengthUnit::Mile),
        "BR" => SpeedModel::new(90.0, LengthUnit::Km),
        _ => Err(EstimateError::UnknownRegion(region.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotObservation {
    pub section_id: String,
    /// Trucks on the section in both directions.
    pub c_i: u64,
    pub section_length: Length,
    pub timestamp: NaiveDateTime,
    pub region: String,
}

impl SnapshotObservation {
    pub fn new(
        section_id: impl Into<String>,
        c_i: u64,
        section_length: Length,
        timestamp: NaiveDateTime,
        region: impl Into<String>,
    ) -> Result<Self, EstimateError> {
        if !(section_length.value.is_finite() && section_length.value > 0.0) {
            return Err(EstimateError::Domain(format!(
                "section length must be positive, got {}",
                section_length.value
            )));
        }
        Ok(SnapshotObservation {
            section_id: section_id.into(),
            c_i,
            section_length,
            timestamp,
            region: region.into(),
        })
    }

    pub fn key(&self) -> TimeKey {
        TimeKey::from_datetime(self.timestamp)
    }
}

/// `24 · c · v / (s · f)` with `s` and `v` in the same length unit.
pub fn aadtt_point(c_i: f64, s: f64, v: f64, f: f64) -> Result<f64, EstimateError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(EstimateError::Domain(format!("section length must be positive, got {s}")));
    }
    if !(v.is_finite() && v > 0.0) {
        return Err(EstimateError::Domain(format!("speed must be positive, got {v}")));
    }
    if !(f.is_finite() && f > 0.0) {
        return Err(EstimateError::Domain(format!("factor must be positive, got {f}")));
    }
    if !(c_i.is_finite() && c_i >= 0.0) {
        return Err(EstimateError::Domain(format!("count must be nonnegative, got {c_i}")));
    }
    Ok(24.0 * c_i * v / (s * f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSource {
    Cell,
    DowPool,
    AllResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AadttEstimate {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub observation: SnapshotObservation,
    pub speed: SpeedModel,
    pub f_pred: f64,
    pub residual_source: ResidualSource,
    /// Samples whose factor hit the floor after all redraws.
    pub clamped: usize,
    pub warnings: Vec<String>,
    pub samples: Vec<f64>,
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn residual_pool(model: &FactorModel, key: TimeKey, warnings: &mut Vec<String>) -> Result<(Vec<f64>, ResidualSource), EstimateError> {
    let bank = &model.residual_bank;
    if let Ok(cell) = bank.cell(key.dow(), key.hour()) {
        return Ok((cell.to_vec(), ResidualSource::Cell));
    }
    warnings.push(format!(
        "no residuals for dow {} hour {}; using the dow {} pool",
        key.dow(),
        key.hour(),
        key.dow()
    ));
    let pool = bank.dow_pool(key.dow());
    if !pool.is_empty() {
        return Ok((pool, ResidualSource::DowPool));
    }
    warnings.push(format!("no residuals for dow {}; using all residuals", key.dow()));
    let all = bank.all();
    if all.is_empty() {
        return Err(EstimateError::NoResiduals);
    }
    Ok((all, ResidualSource::AllResiduals))
}

/// Draws `n` AADTT samples: speed from a normal truncated to positive values,
/// factor from the model prediction plus a residual drawn uniformly from the
/// matching `(dow, hour)` cell.
pub fn estimate_aadtt(
    obs: &SnapshotObservation,
    speed: &SpeedModel,
    model: &FactorModel,
    n: usize,
    seed: u64,
) -> Result<AadttEstimate, EstimateError> {
    if n == 0 {
        return Err(EstimateError::NoSamples);
    }
    let speed = speed.validated()?;
    let key = obs.key();
    let f_pred = predict_factor(model, key)?;
    let mut warnings = Vec::new();
    let (pool, residual_source) = residual_pool(model, key, &mut warnings)?;
    let s = obs.section_length.to_unit(speed.unit);
    let c = obs.c_i as f64;
    if obs.c_i == 0 {
        warnings.push("no trucks on the section; every sample is 0".to_string());
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let n_chunks = n.div_ceil(CHUNK);
    let chunks: Vec<Result<(Vec<f64>, usize), EstimateError>> = (0..n_chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::indexed_substream(seed, "estimate", i as u64);
            let len = CHUNK.min(n - i * CHUNK);
            let mut out = Vec::with_capacity(len);
            let mut clamped = 0;
            for _ in 0..len {
                let v = loop {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = speed.v0 + speed.rel_sd * speed.v0 * z;
                    if v > 0.0 {
                        break v;
                    }
                };
                let mut f = f_pred + pool[rng.random_range(0..pool.len())];
                let mut redraws = 0;
                while f <= F_MIN && redraws < MAX_REDRAWS {
                    f = f_pred + pool[rng.random_range(0..pool.len())];
                    redraws += 1;
                }
                if f <= F_MIN {
                    f = F_MIN;
                    clamped += 1;
                }
                out.push(aadtt_point(c, s, v, f)?);
            }
            Ok((out, clamped))
        })
        .collect();

    let mut samples = Vec::with_capacity(n);
    let mut clamped = 0;
    for chunk in chunks {
        let (v, k) = chunk?;
        samples.extend(v);
        clamped += k;
    }
    if clamped > 0 {
        let w = format!("{clamped} of {n} factor draws clamped to {F_MIN}");
        log::warn!("{w}");
        warnings.push(w);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(AadttEstimate {
        median: quantile_sorted(&sorted, 0.5),
        q25: quantile_sorted(&sorted, 0.25),
        q75: quantile_sorted(&sorted, 0.75),
        n_samples: n,
        seed,
        observation: obs.clone(),
        speed,
        f_pred,
        residual_source,
        clamped,
        warnings,
        samples,
    })
}
