//! Time-variation factor models.
//!
//! A factor `f(h, d, m)` is the expected hourly count at hour `h`, day of week
//! `d` and month `m`, divided by the station-year mean. Models are fit on
//! normalized hourly counts and carry a bank of training residuals grouped by
//! `(dow, hour)` for uncertainty propagation.

mod crossval;
mod design;
mod forest;
mod quantile;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::counts::NormalizedSeries;

pub use crossval::{cross_validate, CrossValidation, SpecScore};
pub use design::{column_names, design_row, n_columns, sparse_row, Encoding, SparseRow};
pub use forest::{fit_forest, Forest, ForestFit, ForestParams, Node, Tree};
pub use quantile::{fit_quantile, fit_quantile_grouped, pinball, QuantileFit, QuantileOptions, RowGroup};

/// Number of distinct `(hour, dow, month)` keys.
pub const GRID_SIZE: usize = 24 * 7 * 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("no training rows")]
    Empty,
    #[error("{rows} training rows for {features} features")]
    InsufficientRows { rows: usize, features: usize },
    #[error("tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("normal equations are singular")]
    SingularFit,
    #[error("invalid time key: hour {hour}, dow {dow}, month {month}")]
    InvalidKey { hour: u8, dow: u8, month: u8 },
    #[error("model {0} predicts negative factors and is infeasible")]
    Infeasible(ModelSpec),
    #[error("no training residuals for dow {dow}, hour {hour}")]
    MissingCell { dow: u8, hour: u8 },
    #[error("cross-validation needs at least two regions with data, found {0}")]
    TooFewRegions(usize),
    #[error("unknown model spec `{0}`")]
    UnknownSpec(String),
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
}

/// Hour 0–23, day of week 1 (Monday) – 7, month 1–12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeKey {
    hour: u8,
    dow: u8,
    month: u8,
}

impl TimeKey {
    pub fn new(hour: u8, dow: u8, month: u8) -> Result<Self, FactorError> {
        if hour > 23 || !(1..=7).contains(&dow) || !(1..=12).contains(&month) {
            return Err(FactorError::InvalidKey { hour, dow, month });
        }
        Ok(TimeKey { hour, dow, month })
    }

    pub fn from_datetime(t: NaiveDateTime) -> Self {
        TimeKey {
            hour: t.hour() as u8,
            dow: t.weekday().number_from_monday() as u8,
            month: t.month() as u8,
        }
    }

    pub fn hour(self) -> u8 {
        self.hour
    }

    pub fn dow(self) -> u8 {
        self.dow
    }

    pub fn month(self) -> u8 {
        self.month
    }

    /// Dense index in `0..GRID_SIZE`, month-major.
    pub fn index(self) -> usize {
        ((self.month as usize - 1) * 7 + (self.dow as usize - 1)) * 24 + self.hour as usize
    }

    pub fn from_index(i: usize) -> Self {
        assert!(i < GRID_SIZE, "time key index {i} out of range");
        TimeKey {
            hour: (i % 24) as u8,
            dow: ((i / 24) % 7 + 1) as u8,
            month: (i / (24 * 7) + 1) as u8,
        }
    }

    /// Every key, in index order.
    pub fn grid() -> impl Iterator<Item = TimeKey> + Clone {
        (0..GRID_SIZE).map(TimeKey::from_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelSpec {
    /// weekend + hour
    WeekendHour,
    /// DOW + daytime
    DowDaytime,
    /// DOW + hour
    DowHour,
    /// DOW + hour + hour × DOW
    DowHourInteraction,
    /// month + DOW + hour
    MonthDowHour,
    /// month + DOW + hour + hour × DOW
    MonthDowHourInteraction,
    RandomForest,
}

impl ModelSpec {
    pub const LINEAR: [ModelSpec; 6] = [
        ModelSpec::WeekendHour,
        ModelSpec::DowDaytime,
        ModelSpec::DowHour,
        ModelSpec::DowHourInteraction,
        ModelSpec::MonthDowHour,
        ModelSpec::MonthDowHourInteraction,
    ];

    pub const ALL: [ModelSpec; 7] = [
        ModelSpec::WeekendHour,
        ModelSpec::DowDaytime,
        ModelSpec::DowHour,
        ModelSpec::DowHourInteraction,
        ModelSpec::MonthDowHour,
        ModelSpec::MonthDowHourInteraction,
        ModelSpec::RandomForest,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelSpec::WeekendHour => "linear-1",
            ModelSpec::DowDaytime => "linear-2",
            ModelSpec::DowHour => "linear-3",
            ModelSpec::DowHourInteraction => "linear-4",
            ModelSpec::MonthDowHour => "linear-5",
            ModelSpec::MonthDowHourInteraction => "linear-6",
            ModelSpec::RandomForest => "rf",
        }
    }

    pub fn formula(self) -> &'static str {
        match self {
            ModelSpec::WeekendHour => "weekend + hour",
            ModelSpec::DowDaytime => "DOW + daytime",
            ModelSpec::DowHour => "DOW + hour",
            ModelSpec::DowHourInteraction => "DOW + hour + hour*DOW",
            ModelSpec::MonthDowHour => "month + DOW + hour",
            ModelSpec::MonthDowHourInteraction => "month + DOW + hour + hour*DOW",
            ModelSpec::RandomForest => "random forest on (hour, DOW, month)",
        }
    }

    pub fn is_linear(self) -> bool {
        self != ModelSpec::RandomForest
    }

    /// Parses a comma-separated list; `all` expands to every spec.
    pub fn parse_list(s: &str) -> Result<Vec<ModelSpec>, FactorError> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                out.extend(ModelSpec::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelSpec {
    type Err = FactorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let spec = match t.as_str() {
            "linear-1" | "1" => ModelSpec::WeekendHour,
            "linear-2" | "2" => ModelSpec::DowDaytime,
            "linear-3" | "3" => ModelSpec::DowHour,
            "linear-4" | "4" => ModelSpec::DowHourInteraction,
            "linear-5" | "5" => ModelSpec::MonthDowHour,
            "linear-6" | "6" => ModelSpec::MonthDowHourInteraction,
            "rf" | "random-forest" | "forest" => ModelSpec::RandomForest,
            _ => return Err(FactorError::UnknownSpec(s.to_string())),
        };
        Ok(spec)
    }
}

impl From<ModelSpec> for String {
    fn from(s: ModelSpec) -> String {
        s.label().to_string()
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = FactorError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// One normalized hourly observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorRow {
    pub key: TimeKey,
    pub y: f64,
}

pub fn rows_from_normalized(series: &NormalizedSeries) -> Vec<FactorRow> {
    series
        .counts
        .iter()
        .map(|c| FactorRow {
            key: TimeKey::from_datetime(c.timestamp),
            y: c.count,
        })
        .collect()
}

/// Training residuals keyed by `(dow, hour)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<ResidualCell>", from = "Vec<ResidualCell>")]
pub struct ResidualBank {
    cells: BTreeMap<(u8, u8), Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ResidualCell {
    dow: u8,
    hour: u8,
    residuals: Vec<f64>,
}

impl From<ResidualBank> for Vec<ResidualCell> {
    fn from(b: ResidualBank) -> Self {
        b.cells
            .into_iter()
            .map(|((dow, hour), residuals)| ResidualCell {
                dow,
                hour,
                residuals,
            })
            .collect()
    }
}

impl From<Vec<ResidualCell>> for ResidualBank {
    fn from(v: Vec<ResidualCell>) -> Self {
        let mut bank = ResidualBank::default();
        for c in v {
            bank.cells
                .entry((c.dow, c.hour))
                .or_default()
                .extend(c.residuals);
        }
        bank
    }
}

impl ResidualBank {
    pub fn push(&mut self, key: TimeKey, residual: f64) {
        self.cells
            .entry((key.dow(), key.hour()))
            .or_default()
            .push(residual);
    }

    pub fn cell(&self, dow: u8, hour: u8) -> Result<&[f64], FactorError> {
        self.cells
            .get(&(dow, hour))
            .filter(|c| !c.is_empty())
            .map(Vec::as_slice)
            .ok_or(FactorError::MissingCell { dow, hour })
    }

    /// All residuals for one day of week, in hour order.
    pub fn dow_pool(&self, dow: u8) -> Vec<f64> {
        self.cells
            .range((dow, 0)..=(dow, 23))
            .flat_map(|(_, v)| v.iter().copied())
            .collect()
    }

    pub fn all(&self) -> Vec<f64> {
        self.cells.values().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> impl Iterator<Item = ((u8, u8), &[f64])> {
        self.cells.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameters {
    Linear {
        columns: Vec<String>,
        coefficients: Vec<f64>,
    },
    Forest(Forest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub spec: ModelSpec,
    pub parameters: Parameters,
    pub residual_bank: ResidualBank,
    pub training_regions: Vec<String>,
    pub training_rows: usize,
    pub encoding: Encoding,
    pub feasible: bool,
}

impl FactorModel {
    /// Prediction without the feasibility gate.
    pub fn predict_unchecked(&self, key: TimeKey) -> f64 {
        match &self.parameters {
            Parameters::Linear { coefficients, .. } => sparse_row(self.spec, key, &self.encoding)
                .iter()
                .map(|&(j, v)| v * coefficients[j])
                .sum(),
            Parameters::Forest(forest) => forest.predict(key),
        }
    }

    /// Unchecked predictions for every key, indexed by [`TimeKey::index`].
    pub fn grid_predictions(&self) -> Vec<f64> {
        TimeKey::grid().map(|k| self.predict_unchecked(k)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub quantile: QuantileOptions,
    pub forest: ForestParams,
    pub encoding: Encoding,
    pub seed: u64,
}

fn group_rows(spec: ModelSpec, rows: &[FactorRow], enc: &Encoding) -> Vec<RowGroup> {
    let mut by_key: BTreeMap<TimeKey, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_key.entry(r.key).or_default().push(r.y);
    }
    by_key
        .into_iter()
        .map(|(k, responses)| RowGroup {
            row: sparse_row(spec, k, enc),
            responses,
        })
        .collect()
}

/// Fits one model. Linear models use median quantile regression; the forest
/// bank holds out-of-bag residuals where a row was left out of some tree.
pub fn fit_factor_model(
    spec: ModelSpec,
    rows: &[FactorRow],
    training_regions: &[String],
    opts: &FitOptions,
) -> Result<FactorModel, FactorError> {
    if rows.is_empty() {
        return Err(FactorError::Empty);
    }
    let mut model = FactorModel {
        spec,
        parameters: Parameters::Linear {
            columns: Vec::new(),
            coefficients: Vec::new(),
        },
        residual_bank: ResidualBank::default(),
        training_regions: training_regions.to_vec(),
        training_rows: rows.len(),
        encoding: opts.encoding,
        feasible: false,
    };
    if spec.is_linear() {
        let groups = group_rows(spec, rows, &opts.encoding);
        let fit = fit_quantile_grouped(&groups, n_columns(spec), &opts.quantile)?;
        if !fit.converged {
            log::warn!(
                "{spec}: quantile regression stopped after {} iterations",
                fit.iterations
            );
        }
        model.parameters = Parameters::Linear {
            columns: column_names(spec),
            coefficients: fit.coefficients,
        };
        model.residual_bank = residual_bank(&model, rows);
    } else {
        let ForestFit { forest, oob } = fit_forest(rows, &opts.forest, opts.seed)?;
        model.parameters = Parameters::Forest(forest);
        for (r, pred) in rows.iter().zip(oob) {
            let p = pred.unwrap_or_else(|| model.predict_unchecked(r.key));
            model.residual_bank.push(r.key, r.y - p);
        }
    }
    model.feasible = feasibility_check(&model);
    Ok(model)
}

pub fn predict_factor(model: &FactorModel, key: TimeKey) -> Result<f64, FactorError> {
    if !model.feasible {
        return Err(FactorError::Infeasible(model.spec));
    }
    Ok(model.predict_unchecked(key))
}

/// True iff no prediction over the full key grid is negative.
pub fn feasibility_check(model: &FactorModel) -> bool {
    TimeKey::grid().all(|k| {
        let p = model.predict_unchecked(k);
        p.is_finite() && p >= 0.0
    })
}

/// In-sample residuals `y − prediction` grouped by `(dow, hour)`.
pub fn residual_bank(model: &FactorModel, rows: &[FactorRow]) -> ResidualBank {
    let table = model.grid_predictions();
    let mut bank = ResidualBank::default();
    for r in rows {
        bank.push(r.key, r.y - table[r.key.index()]);
    }
    bank
}

/// Mean absolute error of unchecked predictions on `rows`.
pub fn mean_absolute_error(model: &FactorModel, rows: &[FactorRow]) -> f64 {
    let table = model.grid_predictions();
    rows.iter()
        .map(|r| (r.y - table[r.key.index()]).abs())
        .sum::<f64>()
        / rows.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn constant_rows(c: f64) -> Vec<FactorRow> {
        TimeKey::grid()
            .step_by(3)
            .map(|key| FactorRow { key, y: c })
            .collect()
    }

    /// Weekdays have a deep night trough; weekends are flat and low. The
    /// additive weekend shift is fit to the majority daytime hours and drives
    /// weekend nights below zero.
    fn weekend_night_dip() -> Vec<FactorRow> {
        TimeKey::grid()
            .map(|key| {
                let night = key.hour() < 6;
                let weekend = key.dow() >= 6;
                let y = match (weekend, night) {
                    (true, _) => 0.3,
                    (false, true) => 0.2,
                    (false, false) => 1.4,
                };
                FactorRow { key, y }
            })
            .collect()
    }

    #[test]
    fn time_key_ranges_and_index() {
        assert!(TimeKey::new(24, 1, 1).is_err());
        assert!(TimeKey::new(0, 0, 1).is_err());
        assert!(TimeKey::new(0, 1, 13).is_err());
        let keys: Vec<TimeKey> = TimeKey::grid().collect();
        assert_eq!(keys.len(), GRID_SIZE);
        for (i, k) in keys.iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(TimeKey::new(k.hour(), k.dow(), k.month()).unwrap(), *k);
        }
        let t = NaiveDate::from_ymd_opt(2017, 6, 14)
            .unwrap()
            .and_hms_opt(15, 30, 0)
            .unwrap();
        assert_eq!(TimeKey::from_datetime(t), TimeKey::new(15, 3, 6).unwrap());
    }

    #[test]
    fn spec_labels_round_trip() {
        for s in ModelSpec::ALL {
            assert_eq!(s.label().parse::<ModelSpec>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<ModelSpec>(&json).unwrap(), s);
        }
        assert_eq!(ModelSpec::parse_list("all").unwrap().len(), 7);
        assert_eq!(
            ModelSpec::parse_list("rf, linear-1,rf").unwrap(),
            vec![ModelSpec::WeekendHour, ModelSpec::RandomForest]
        );
        assert!(ModelSpec::parse_list("linear-9").is_err());
    }

    #[test]
    fn constant_one_predicts_one_everywhere() {
        let rows = constant_rows(1.0);
        for spec in ModelSpec::ALL {
            let m = fit_factor_model(spec, &rows, &["A".into()], &FitOptions::default()).unwrap();
            assert!(m.feasible, "{spec}");
            for k in TimeKey::grid().step_by(7) {
                let p = predict_factor(&m, k).unwrap();
                assert!((p - 1.0).abs() < 1e-6, "{spec} {k:?} {p}");
            }
            for (_, cell) in m.residual_bank.cells() {
                assert!(cell.iter().all(|r| r.abs() < 1e-6));
            }
        }
    }

    #[test]
    fn additive_models_go_negative_on_weekend_nights() {
        let rows = weekend_night_dip();
        let opts = FitOptions::default();
        let m1 = fit_factor_model(ModelSpec::WeekendHour, &rows, &[], &opts).unwrap();
        assert!(!m1.feasible);
        assert_eq!(
            predict_factor(&m1, TimeKey::new(2, 7, 1).unwrap()),
            Err(FactorError::Infeasible(ModelSpec::WeekendHour))
        );
        let m4 = fit_factor_model(ModelSpec::DowHourInteraction, &rows, &[], &opts).unwrap();
        assert!(m4.feasible);
        let rf = fit_factor_model(ModelSpec::RandomForest, &rows, &[], &opts).unwrap();
        assert!(rf.feasible);
    }

    #[test]
    fn residual_cells_partition_training_rows() {
        let rows = weekend_night_dip();
        let m = fit_factor_model(ModelSpec::DowHour, &rows, &[], &FitOptions::default()).unwrap();
        assert_eq!(m.residual_bank.len(), rows.len());
        for dow in 1..=7 {
            for hour in 0..24 {
                assert!(m.residual_bank.cell(dow, hour).is_ok());
            }
        }
        let partial: Vec<FactorRow> = rows.into_iter().filter(|r| r.key.hour() != 3).collect();
        let m = fit_factor_model(ModelSpec::DowHour, &partial, &[], &FitOptions::default()).unwrap();
        assert_eq!(
            m.residual_bank.cell(2, 3),
            Err(FactorError::MissingCell { dow: 2, hour: 3 })
        );
        assert_eq!(m.residual_bank.dow_pool(2).len(), 23 * 12);
    }

    #[test]
    fn model_serializes() {
        let rows = weekend_night_dip();
        for spec in [ModelSpec::MonthDowHour, ModelSpec::RandomForest] {
            let m = fit_factor_model(spec, &rows, &["NY".into()], &FitOptions::default()).unwrap();
            let json = serde_json::to_string(&m).unwrap();
            let back: FactorModel = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn weighted_mean_prediction_is_near_one(
            amp in 0.0..0.6f64,
            weekend in 0.6..1.0f64,
            spec_idx in 0usize..7,
            dup_seed in any::<u64>(),
        ) {
            let spec = ModelSpec::ALL[spec_idx];
            let raw: Vec<(TimeKey, f64)> = TimeKey::grid()
                .flat_map(|k| {
                    let d = 1.0 + amp * (std::f64::consts::TAU * (k.hour() as f64 - 14.0) / 24.0).sin();
                    let y = d * if k.dow() >= 6 { weekend } else { 1.0 };
                    let copies = 1 + crate::rng::indexed_seed(dup_seed, "dup", k.index() as u64) % 3;
                    std::iter::repeat_n((k, y), copies as usize)
                })
                .collect();
            let mean = raw.iter().map(|r| r.1).sum::<f64>() / raw.len() as f64;
            let rows: Vec<FactorRow> = raw.iter().map(|&(key, y)| FactorRow { key, y: y / mean }).collect();
            let m = fit_factor_model(spec, &rows, &[], &FitOptions::default()).unwrap();
            let avg = rows.iter().map(|r| m.predict_unchecked(r.key)).sum::<f64>() / rows.len() as f64;
            prop_assert!((avg - 1.0).abs() <= 0.05, "{} {}", spec, avg);
        }
    }
}
