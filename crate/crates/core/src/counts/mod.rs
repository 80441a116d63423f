//! Hourly ground counts: normalization, AADTT by the simple and AASHTO
//! methods, toll-trip conversion, class filtering, and station sampling.

mod classes;
mod sampling;
mod toll;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use thiserror::Error;

pub use classes::{filter_truck_classes, ClassFilter, ClassRule, HasVehicleClass};
pub use sampling::{sample_stations, summarize_stations, RegionSelection, StationSummary};
pub use toll::{toll_to_section_counts, MilepostTable, Section, SectionCounts, TollTrip};

/// Hours in a non-leap year; one "station-year equivalent".
pub const HOURS_PER_YEAR: f64 = 8760.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountsError {
    #[error("empty count series")]
    Empty,
    #[error("station `{0}` has no positive counts; cannot normalize")]
    ZeroMean(String),
    #[error("series mixes {0}; expected a single station-year")]
    MixedSeries(String),
    #[error("no complete 24-hour day in the series")]
    InsufficientData,
    #[error("invalid count {count} for station `{station_id}`")]
    InvalidCount { station_id: String, count: f64 },
    #[error("unknown plaza `{0}` in milepost table")]
    UnknownPlaza(String),
    #[error("invalid toll trip: entry and exit plaza are both `{0}`")]
    SamePlaza(String),
    #[error("invalid section: {0}")]
    InvalidSection(String),
    #[error("speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("unknown vehicle class `{0}`")]
    UnknownClass(String),
}

/// One station-hour observation. `timestamp` is naive local time truncated to
/// the hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyCount {
    pub station_id: String,
    pub region: String,
    pub timestamp: NaiveDateTime,
    pub count: f64,
    pub vehicle_class: Option<String>,
}

impl HourlyCount {
    pub fn new(
        station_id: impl Into<String>,
        region: impl Into<String>,
        timestamp: NaiveDateTime,
        count: f64,
    ) -> Result<Self, CountsError> {
        let station_id = station_id.into();
        if !(count.is_finite() && count >= 0.0) {
            return Err(CountsError::InvalidCount { station_id, count });
        }
        Ok(HourlyCount {
            station_id,
            region: region.into(),
            timestamp: truncate_to_hour(timestamp),
            count,
            vehicle_class: None,
        })
    }

    pub fn with_class(mut self, class: impl Into<String>) -> Self {
        self.vehicle_class = Some(class.into());
        self
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }

    pub fn year(&self) -> i32 {
        self.timestamp.year()
    }

    pub fn month(&self) -> u32 {
        self.timestamp.month()
    }

    /// 0–23.
    pub fn hour(&self) -> u32 {
        self.timestamp.hour()
    }

    /// Monday = 1 … Sunday = 7.
    pub fn dow(&self) -> u32 {
        self.timestamp.weekday().number_from_monday()
    }
}

pub fn truncate_to_hour(t: NaiveDateTime) -> NaiveDateTime {
    t.date()
        .and_hms_opt(t.hour(), 0, 0)
        .expect("hour taken from a valid timestamp")
}

/// Sums rows sharing a station and clock hour, e.g. per-class rows left after
/// class filtering. The result carries no class and is ordered by station then
/// time.
pub fn sum_by_hour(counts: &[HourlyCount]) -> Vec<HourlyCount> {
    let mut sums: BTreeMap<(&str, NaiveDateTime), (&str, f64)> = BTreeMap::new();
    for c in counts {
        let e = sums
            .entry((c.station_id.as_str(), truncate_to_hour(c.timestamp)))
            .or_insert((c.region.as_str(), 0.0));
        e.1 += c.count;
    }
    sums.into_iter()
        .map(|((station, t), (region, count))| HourlyCount {
            station_id: station.to_string(),
            region: region.to_string(),
            timestamp: t,
            count,
            vehicle_class: None,
        })
        .collect()
}

fn single_station(series: &[HourlyCount]) -> Result<&str, CountsError> {
    let first = series.first().ok_or(CountsError::Empty)?;
    if series.iter().any(|c| c.station_id != first.station_id) {
        return Err(CountsError::MixedSeries("stations".into()));
    }
    Ok(&first.station_id)
}

/// A station-year scaled by its mean hourly count.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub counts: Vec<HourlyCount>,
    pub mean: f64,
}

impl NormalizedSeries {
    /// Multiplies back by the stored mean.
    pub fn denormalize(&self) -> Vec<HourlyCount> {
        self.counts
            .iter()
            .map(|c| HourlyCount {
                count: c.count * self.mean,
                ..c.clone()
            })
            .collect()
    }
}

/// Divides every count of one station-year by the mean of its observed hours.
pub fn normalize(series: &[HourlyCount]) -> Result<NormalizedSeries, CountsError> {
    let station = single_station(series)?;
    let year = series[0].year();
    if series.iter().any(|c| c.year() != year) {
        return Err(CountsError::MixedSeries("years".into()));
    }
    let mean = series.iter().map(|c| c.count).sum::<f64>() / series.len() as f64;
    if mean <= 0.0 {
        return Err(CountsError::ZeroMean(station.to_string()));
    }
    let counts = series
        .iter()
        .map(|c| HourlyCount {
            count: c.count / mean,
            ..c.clone()
        })
        .collect();
    Ok(NormalizedSeries { counts, mean })
}

/// Splits a mixed table into station-years and normalizes each. Station-years
/// without any positive count are returned as errors alongside the rest.
pub fn normalize_station_years(
    counts: &[HourlyCount],
) -> Vec<((String, i32), Result<NormalizedSeries, CountsError>)> {
    let mut groups: BTreeMap<(String, i32), Vec<HourlyCount>> = BTreeMap::new();
    for c in counts {
        groups
            .entry((c.station_id.clone(), c.year()))
            .or_default()
            .push(c.clone());
    }
    groups
        .into_iter()
        .map(|(k, v)| {
            let n = normalize(&v);
            (k, n)
        })
        .collect()
}

/// Mean hourly count times 24.
pub fn aadtt_simple(series: &[HourlyCount]) -> Result<f64, CountsError> {
    single_station(series)?;
    let mean = series.iter().map(|c| c.count).sum::<f64>() / series.len() as f64;
    Ok(mean * 24.0)
}

/// Daily totals of complete days are averaged within each (month, DOW) cell;
/// the populated cell means are then averaged with equal weight.
pub fn aadtt_aashto(series: &[HourlyCount]) -> Result<f64, CountsError> {
    single_station(series)?;
    let mut days: BTreeMap<NaiveDate, (BTreeSet<u32>, f64)> = BTreeMap::new();
    for c in series {
        let e = days.entry(c.date()).or_default();
        e.0.insert(c.hour());
        e.1 += c.count;
    }
    let mut cells: BTreeMap<(u32, u32), (f64, usize)> = BTreeMap::new();
    for (date, (hours, total)) in &days {
        if hours.len() < 24 {
            continue;
        }
        let cell = cells
            .entry((date.month(), date.weekday().number_from_monday()))
            .or_default();
        cell.0 += total;
        cell.1 += 1;
    }
    if cells.is_empty() {
        return Err(CountsError::InsufficientData);
    }
    let sum: f64 = cells.values().map(|(s, n)| s / *n as f64).sum();
    Ok(sum / cells.len() as f64)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sum_by_hour_merges_classes() {
        let t = test_support::at(2017, 3, 1, 5);
        let rows = vec![
            HourlyCount::new("b", "R", t, 1.0).unwrap().with_class("9"),
            HourlyCount::new("a", "R", t + chrono::Duration::minutes(30), 2.0).unwrap().with_class("5"),
            HourlyCount::new("a", "R", t, 3.0).unwrap().with_class("9"),
        ];
        let s = sum_by_hour(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].station_id.as_str(), s[0].count, s[0].timestamp), ("a", 5.0, t));
        assert_eq!(s[1].vehicle_class, None);
    }

    #[test]
    fn dow_is_monday_one() {
        // 2017-06-12 was a Monday, 2017-06-18 a Sunday.
        let c = HourlyCount::new("s", "R", at(2017, 6, 12, 5), 1.0).unwrap();
        assert_eq!(c.dow(), 1);
        let c = HourlyCount::new("s", "R", at(2017, 6, 18, 5), 1.0).unwrap();
        assert_eq!(c.dow(), 7);
    }

    #[test]
    fn rejects_negative_counts() {
        assert!(HourlyCount::new("s", "R", at(2017, 1, 1, 0), -1.0).is_err());
        assert!(HourlyCount::new("s", "R", at(2017, 1, 1, 0), f64::NAN).is_err());
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(&series("s", at(2017, 1, 1, 0), &[10.0; 5])).unwrap();
        assert!(n.counts.iter().all(|c| c.count == 1.0));
        let n = normalize(&series("s", at(2017, 1, 1, 0), &[10.0, 30.0])).unwrap();
        assert_eq!(
            n.counts.iter().map(|c| c.count).collect::<Vec<_>>(),
            vec![0.5, 1.5]
        );
        assert_eq!(n.mean, 20.0);
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(normalize(&[]), Err(CountsError::Empty));
        assert_eq!(
            normalize(&series("s", at(2017, 1, 1, 0), &[0.0, 0.0])),
            Err(CountsError::ZeroMean("s".into()))
        );
        // Spans new year.
        let s = series("s", at(2016, 12, 31, 23), &[1.0, 2.0]);
        assert!(matches!(normalize(&s), Err(CountsError::MixedSeries(_))));
    }

    #[test]
    fn normalize_groups_by_station_year() {
        let mut all = series("a", at(2016, 12, 31, 22), &[1.0, 3.0, 5.0, 7.0]);
        all.extend(series("b", at(2017, 3, 1, 0), &[0.0, 0.0]));
        let groups = normalize_station_years(&all);
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[0].0, ("a".to_string(), 2016));
        assert_eq!(groups[0].1.as_ref().unwrap().mean, 2.0);
        assert_eq!(groups[1].1.as_ref().unwrap().mean, 6.0);
        assert!(groups[2].1.is_err());
    }

    #[test]
    fn simple_examples() {
        let s = series("s", at(2017, 1, 1, 0), &[100.0; 30]);
        assert_eq!(aadtt_simple(&s).unwrap(), 2400.0);
        let alt: Vec<f64> = (0..48).map(|i| if i % 2 == 0 { 0.0 } else { 200.0 }).collect();
        assert_eq!(aadtt_simple(&series("s", at(2017, 1, 1, 0), &alt)).unwrap(), 2400.0);
        assert_eq!(aadtt_simple(&[]), Err(CountsError::Empty));
    }

    #[test]
    fn aashto_complete_constant_year() {
        let s = series("s", at(2017, 1, 1, 0), &[100.0; 8760]);
        assert_eq!(aadtt_aashto(&s).unwrap(), 2400.0);
        assert_eq!(aadtt_simple(&s).unwrap(), 2400.0);
    }

    #[test]
    fn aashto_skips_partial_days() {
        // One complete Monday at 100/h plus a partial Tuesday at 1000/h.
        let mut s = series("s", at(2017, 6, 12, 0), &[100.0; 24]);
        s.extend(series("s", at(2017, 6, 13, 0), &[1000.0; 23]));
        assert_eq!(aadtt_aashto(&s).unwrap(), 2400.0);
        let partial = series("s", at(2017, 6, 13, 0), &[1000.0; 23]);
        assert_eq!(aadtt_aashto(&partial), Err(CountsError::InsufficientData));
    }

    /// Brute force: enumerate calendar days, keep the complete ones, bucket by
    /// (month, weekday) with explicit loops over all 84 cells.
    fn aashto_oracle(series: &[HourlyCount]) -> f64 {
        let first = series.iter().map(|c| c.date()).min().unwrap();
        let last = series.iter().map(|c| c.date()).max().unwrap();
        let mut cell_means = Vec::new();
        for month in 1..=12 {
            for dow in 1..=7 {
                let mut totals = Vec::new();
                let mut d = first;
                while d <= last {
                    if d.month() == month && d.weekday().number_from_monday() == dow {
                        let hours: Vec<&HourlyCount> =
                            series.iter().filter(|c| c.date() == d).collect();
                        let distinct: BTreeSet<u32> = hours.iter().map(|c| c.hour()).collect();
                        if distinct.len() == 24 {
                            totals.push(hours.iter().map(|c| c.count).sum::<f64>());
                        }
                    }
                    d = d.succ_opt().unwrap();
                }
                if !totals.is_empty() {
                    cell_means.push(totals.iter().sum::<f64>() / totals.len() as f64);
                }
            }
        }
        cell_means.iter().sum::<f64>() / cell_means.len() as f64
    }

    #[test]
    fn aashto_removes_sunday_and_february_bias() {
        // 2017: Sundays carry half the traffic. Every month keeps days 1-7;
        // February also keeps all of its weekend days.
        let mut s = Vec::new();
        let mut d = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
        while d.year() == 2017 {
            let keep = d.day() <= 7 || (d.month() == 2 && d.weekday().number_from_monday() >= 6);
            if keep {
                let rate = if d.weekday().number_from_monday() == 7 {
                    50.0
                } else {
                    100.0
                };
                s.extend(series("s", d.and_hms_opt(0, 0, 0).unwrap(), &[rate; 24]));
            }
            d = d.succ_opt().unwrap();
        }
        let aashto = aadtt_aashto(&s).unwrap();
        assert!((aashto - aashto_oracle(&s)).abs() < 1e-9);
        // Unbiased weekly mean: (6 * 2400 + 1200) / 7.
        let ground = (6.0 * 2400.0 + 1200.0) / 7.0;
        assert!((aashto - ground).abs() < 1e-9);
        let simple = aadtt_simple(&s).unwrap();
        let days = s.len() as f64 / 24.0;
        let sundays = s.iter().filter(|c| c.dow() == 7).count() as f64 / 24.0;
        let simple_oracle = (2400.0 * (days - sundays) + 1200.0 * sundays) / days;
        assert!((simple - simple_oracle).abs() < 1e-9);
        assert!((simple - ground).abs() > 1.0);
    }

    proptest! {
        #[test]
        fn normalize_roundtrip(values in prop::collection::vec(0.0..1000.0f64, 1..200)) {
            prop_assume!(values.iter().any(|&v| v > 0.0));
            let s = series("s", at(2017, 3, 1, 0), &values);
            let n = normalize(&s).unwrap();
            let mean: f64 = n.counts.iter().map(|c| c.count).sum::<f64>() / values.len() as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
            for (a, b) in n.denormalize().iter().zip(&s) {
                prop_assert!((a.count - b.count).abs() <= 1e-12 * b.count.max(1e-300));
            }
        }

        #[test]
        fn aashto_matches_oracle(
            day_rates in prop::collection::vec((0.0..300.0f64, 20usize..=24), 1..40),
            start in 0i64..300,
        ) {
            let base = at(2017, 1, 1, 0) + chrono::Duration::days(start);
            let mut s = Vec::new();
            for (k, &(rate, hours)) in day_rates.iter().enumerate() {
                let day = base + chrono::Duration::days(k as i64);
                let vals: Vec<f64> = (0..hours).map(|h| rate + h as f64).collect();
                s.extend(series("s", day, &vals));
            }
            match aadtt_aashto(&s) {
                Ok(v) => prop_assert!((v - aashto_oracle(&s)).abs() <= 1e-9 * v.max(1.0)),
                Err(e) => {
                    prop_assert_eq!(e, CountsError::InsufficientData);
                    prop_assert!(day_rates.iter().all(|&(_, h)| h < 24));
                }
            }
        }
    }
}
