use std::io::Write;

use crate::counts::RegionSelection;
use crate::detect::ThresholdSweep;
use crate::estimate::AadttEstimate;
use crate::factors::CrossValidation;

use super::TIMESTAMP_FORMAT;

pub const SWEEP_HEADER: [&str; 7] = [
    "threshold",
    "count_error",
    "precision",
    "recall",
    "true_positives",
    "false_positives",
    "false_negatives",
];

pub fn write_sweep<W: Write>(w: W, sweep: &ThresholdSweep) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SWEEP_HEADER)?;
    for p in &sweep.points {
        wtr.write_record([
            p.threshold.to_string(),
            p.count_error.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
            p.true_positives.to_string(),
            p.false_positives.to_string(),
            p.false_negatives.to_string(),
        ])?;
    }
    wtr.flush()
}

pub fn estimate_header() -> [&'static str; 16] {
    [
        "section_id",
        "timestamp",
        "region",
        "c_i",
        "section_length",
        "length_unit",
        "v0",
        "speed_unit",
        "rel_sd",
        "f_pred",
        "n_samples",
        "seed",
        "median",
        "q25",
        "q75",
        "clamped",
    ]
}

pub fn estimate_row(e: &AadttEstimate) -> Vec<String> {
    let o = &e.observation;
    vec![
        o.section_id.clone(),
        o.timestamp.format(TIMESTAMP_FORMAT).to_string(),
        o.region.clone(),
        o.c_i.to_string(),
        o.section_length.value.to_string(),
        o.section_length.unit.to_string(),
        e.speed.v0.to_string(),
        format!("{}/h", e.speed.unit),
        e.speed.rel_sd.to_string(),
        e.f_pred.to_string(),
        e.n_samples.to_string(),
        e.seed.to_string(),
        e.median.to_string(),
        e.q25.to_string(),
        e.q75.to_string(),
        e.clamped.to_string(),
    ]
}

pub fn write_estimate<W: Write>(w: W, estimates: &[AadttEstimate]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(estimate_header())?;
    for e in estimates {
        wtr.write_record(estimate_row(e))?;
    }
    wtr.flush()
}

pub fn write_samples<W: Write>(w: W, e: &AadttEstimate) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["sample", "aadtt"])?;
    for (i, s) in e.samples.iter().enumerate() {
        wtr.write_record([i.to_string(), s.to_string()])?;
    }
    wtr.flush()
}

/// One row per spec: mean MAE (empty when excluded), then one column per
/// held-out region.
pub fn write_crossval<W: Write>(w: W, cv: &CrossValidation) -> std::io::Result<()> {
    let regions: Vec<String> = cv
        .scores
        .first()
        .map(|s| s.per_region.keys().cloned().collect())
        .unwrap_or_default();
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["spec".to_string(), "formula".into(), "mean_mae".into(), "raw_mean_mae".into(), "excluded".into()];
    header.extend(regions.iter().map(|r| format!("mae_{r}")));
    wtr.write_record(&header)?;
    for s in &cv.scores {
        let mut row = vec![
            s.spec.label().to_string(),
            s.spec.formula().to_string(),
            s.mean_mae.map(|m| m.to_string()).unwrap_or_default(),
            s.raw_mean_mae.to_string(),
            s.excluded().to_string(),
        ];
        row.extend(regions.iter().map(|r| s.per_region[r].to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()
}

pub fn write_selection<W: Write>(w: W, selections: &[RegionSelection]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["region", "rank", "station_id"])?;
    for s in selections {
        for (i, id) in s.stations.iter().enumerate() {
            wtr.write_record([s.region.as_str(), &(i + 1).to_string(), id.as_str()])?;
        }
    }
    wtr.flush()
}
