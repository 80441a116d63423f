//! Dummy-coded design rows for the linear factor formulas.
//!
//! Every categorical covariate drops its first level (hour 0, Monday,
//! January) into the intercept.

use serde::{Deserialize, Serialize};

use super::{ModelSpec, TimeKey};

/// Encoding choices that are configuration rather than data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoding {
    /// First and last hour (inclusive, 0-based) flagged as daytime.
    pub daytime_start: u8,
    pub daytime_end: u8,
}

impl Default for Encoding {
    fn default() -> Self {
        Encoding {
            daytime_start: 6,
            daytime_end: 18,
        }
    }
}

/// Sparse row: `(column, value)` pairs with ascending columns.
pub type SparseRow = Vec<(usize, f64)>;

const HOUR_DUMMIES: usize = 23;
const DOW_DUMMIES: usize = 6;
const MONTH_DUMMIES: usize = 11;
const INTERACTIONS: usize = HOUR_DUMMIES * DOW_DUMMIES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Weekend,
    Daytime,
    Month,
    Dow,
    Hour,
    HourDow,
}

impl Block {
    fn width(self) -> usize {
        match self {
            Block::Weekend | Block::Daytime => 1,
            Block::Month => MONTH_DUMMIES,
            Block::Dow => DOW_DUMMIES,
            Block::Hour => HOUR_DUMMIES,
            Block::HourDow => INTERACTIONS,
        }
    }
}

fn blocks(spec: ModelSpec) -> &'static [Block] {
    use Block::*;
    match spec {
        ModelSpec::WeekendHour => &[Weekend, Hour],
        ModelSpec::DowDaytime => &[Dow, Daytime],
        ModelSpec::DowHour => &[Dow, Hour],
        ModelSpec::DowHourInteraction => &[Dow, Hour, HourDow],
        ModelSpec::MonthDowHour => &[Month, Dow, Hour],
        ModelSpec::MonthDowHourInteraction => &[Month, Dow, Hour, HourDow],
        ModelSpec::RandomForest => &[],
    }
}

/// Number of design columns including the intercept; 0 for the forest.
pub fn n_columns(spec: ModelSpec) -> usize {
    if spec == ModelSpec::RandomForest {
        return 0;
    }
    1 + blocks(spec).iter().map(|b| b.width()).sum::<usize>()
}

pub fn sparse_row(spec: ModelSpec, key: TimeKey, enc: &Encoding) -> SparseRow {
    let mut row = vec![(0, 1.0)];
    let mut offset = 1;
    let hour = key.hour() as usize;
    let dow = key.dow() as usize;
    let month = key.month() as usize;
    for &b in blocks(spec) {
        let active = match b {
            Block::Weekend => (dow >= 6).then_some(0),
            Block::Daytime => {
                (enc.daytime_start as usize..=enc.daytime_end as usize).contains(&hour).then_some(0)
            }
            Block::Month => (month > 1).then(|| month - 2),
            Block::Dow => (dow > 1).then(|| dow - 2),
            Block::Hour => (hour > 0).then(|| hour - 1),
            Block::HourDow => {
                (hour > 0 && dow > 1).then(|| (hour - 1) * DOW_DUMMIES + (dow - 2))
            }
        };
        if let Some(i) = active {
            row.push((offset + i, 1.0));
        }
        offset += b.width();
    }
    row
}

/// Dense design row for a linear spec.
pub fn design_row(spec: ModelSpec, key: TimeKey, enc: &Encoding) -> Vec<f64> {
    let mut dense = vec![0.0; n_columns(spec)];
    for (i, v) in sparse_row(spec, key, enc) {
        dense[i] = v;
    }
    dense
}

pub fn column_names(spec: ModelSpec) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    for &b in blocks(spec) {
        match b {
            Block::Weekend => names.push("weekend".into()),
            Block::Daytime => names.push("daytime".into()),
            Block::Month => names.extend((2..=12).map(|m| format!("month_{m}"))),
            Block::Dow => names.extend((2..=7).map(|d| format!("dow_{d}"))),
            Block::Hour => names.extend((1..=23).map(|h| format!("hour_{h}"))),
            Block::HourDow => {
                for h in 1..=23 {
                    names.extend((2..=7).map(|d| format!("hour_{h}:dow_{d}")));
                }
            }
        }
    }
    names
}
