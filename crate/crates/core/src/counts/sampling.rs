use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{aadtt_simple, HourlyCount, HOURS_PER_YEAR};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct StationSummary {
    pub station_id: String,
    pub region: String,
    pub hours_observed: usize,
    /// Observed hours over hours in a year, capped at 1.
    pub completeness: f64,
    pub aadtt_simple: f64,
}

/// One summary per station, ordered by station id.
pub fn summarize_stations(counts: &[HourlyCount]) -> Vec<StationSummary> {
    let mut groups: BTreeMap<&str, Vec<HourlyCount>> = BTreeMap::new();
    for c in counts {
        groups.entry(&c.station_id).or_default().push(c.clone());
    }
    groups
        .into_iter()
        .map(|(id, series)| StationSummary {
            station_id: id.to_string(),
            region: series[0].region.clone(),
            hours_observed: series.len(),
            completeness: (series.len() as f64 / HOURS_PER_YEAR).min(1.0),
            aadtt_simple: aadtt_simple(&series).expect("non-empty single-station group"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSelection {
    pub region: String,
    pub stations: Vec<String>,
    pub hours: usize,
    /// Selected hours in units of full station-years.
    pub equivalents: f64,
    /// The region ran out of stations before reaching the target.
    pub exhausted: bool,
    pub warning: Option<String>,
}

/// Ranking used for selection: completeness, then AADTT, both descending.
/// Exact ties on both are put in a seeded random order.
fn rank(region: &str, stations: &[StationSummary], seed: u64) -> Vec<StationSummary> {
    let mut sorted = stations.to_vec();
    sorted.sort_by(|a, b| {
        b.completeness
            .total_cmp(&a.completeness)
            .then(b.aadtt_simple.total_cmp(&a.aadtt_simple))
            .then(a.station_id.cmp(&b.station_id))
    });
    let mut rng = rng::substream(seed, &format!("sample-stations/{region}"));
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len()
            && sorted[end].completeness == sorted[start].completeness
            && sorted[end].aadtt_simple == sorted[start].aadtt_simple
        {
            end += 1;
        }
        sorted[start..end].shuffle(&mut rng);
        start = end;
    }
    sorted
}

/// Picks stations per region, most complete first, until the selection holds
/// `target` station-years of hours or the region is exhausted.
pub fn sample_stations(
    by_region: &BTreeMap<String, Vec<StationSummary>>,
    target: f64,
    seed: u64,
) -> Vec<RegionSelection> {
    let needed = target * HOURS_PER_YEAR;
    by_region
        .iter()
        .map(|(region, stations)| {
            if stations.is_empty() {
                let warning = format!("region `{region}` has no stations");
                log::warn!("{warning}");
                return RegionSelection {
                    region: region.clone(),
                    stations: Vec::new(),
                    hours: 0,
                    equivalents: 0.0,
                    exhausted: true,
                    warning: Some(warning),
                };
            }
            let mut selected = Vec::new();
            let mut hours = 0usize;
            for s in rank(region, stations, seed) {
                if hours as f64 >= needed {
                    break;
                }
                hours += s.hours_observed;
                selected.push(s.station_id);
            }
            let exhausted = (hours as f64) < needed;
            let warning = exhausted.then(|| {
                format!(
                    "region `{region}` exhausted at {:.2} of {target} station-years",
                    hours as f64 / HOURS_PER_YEAR
                )
            });
            if let Some(w) = &warning {
                log::warn!("{w}");
            }
            RegionSelection {
                region: region.clone(),
                stations: selected,
                hours,
                equivalents: hours as f64 / HOURS_PER_YEAR,
                exhausted,
                warning,
            }
        })
        .collect()
}
