//! Inference-time composition: threshold filter, road filter, count, and
//! Monte Carlo estimate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::detect::EvalError;
use crate::error::{Error, StageExt};
use crate::estimate::{
    estimate_aadtt, speed_defaults, AadttEstimate, Length, LengthUnit, SnapshotObservation, SpeedModel,
    DEFAULT_REL_SD, DEFAULT_SAMPLES,
};
use crate::geo::{road_filter, GeoBox, RoadPolyline, DEFAULT_FILTER_RADIUS_M};
use crate::io::{estimate_header, estimate_row, read_boxes, read_model, read_roads};
use crate::rng;

fn default_radius() -> f64 {
    DEFAULT_FILTER_RADIUS_M
}
fn default_threshold() -> f64 {
    0.5
}
fn default_samples() -> usize {
    DEFAULT_SAMPLES
}
fn default_rel_sd() -> f64 {
    DEFAULT_REL_SD
}
fn default_units() -> LengthUnit {
    LengthUnit::Km
}

/// Run configuration, loadable from TOML. Command-line flags override it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub roads: Option<PathBuf>,
    /// Radius for roads whose GeoJSON feature has none.
    #[serde(default = "default_radius")]
    pub filter_radius_m: f64,
    pub model: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rel_sd")]
    pub rel_sd: f64,
    /// Unit assumed for section lengths given without one.
    #[serde(default = "default_units")]
    pub units: LengthUnit,
    /// Region to mean speed, e.g. `BR = "90km/h"`; consulted before the
    /// built-in defaults.
    #[serde(default)]
    pub speeds: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            roads: None,
            filter_radius_m: default_radius(),
            model: None,
            threshold: default_threshold(),
            samples: default_samples(),
            seed: 0,
            rel_sd: default_rel_sd(),
            units: default_units(),
            speeds: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let c: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.filter_radius_m.is_finite() && self.filter_radius_m > 0.0) {
            return Err(Error::Config(format!("filter_radius_m must be positive, got {}", self.filter_radius_m)));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(self.rel_sd.is_finite() && self.rel_sd >= 0.0) {
            return Err(Error::Config(format!("rel_sd must be nonnegative, got {}", self.rel_sd)));
        }
        for (region, s) in &self.speeds {
            s.parse::<SpeedModel>()
                .map_err(|e| Error::Config(format!("speeds.{region}: {e}")))?;
        }
        Ok(())
    }

    /// Mean speed for `region`: explicit override, then the config table,
    /// then the built-in defaults. The config's `rel_sd` applies unless the
    /// override carries its own.
    pub fn speed_for(&self, region: &str, speed_override: Option<SpeedModel>) -> Result<SpeedModel, Error> {
        let from_table = self
            .speeds
            .iter()
            .find(|(r, _)| r.eq_ignore_ascii_case(region))
            .map(|(_, s)| s.parse::<SpeedModel>())
            .transpose()?;
        let base = speed_defaults(region, speed_override.or(from_table))?;
        if speed_override.is_some() {
            Ok(base)
        } else {
            Ok(base.with_rel_sd(self.rel_sd)?)
        }
    }

    /// Parses `18km`, `65mi`, or a bare number in the configured unit.
    pub fn section_length(&self, s: &str) -> Result<Length, Error> {
        match s.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(Length::new(v, self.units)),
            Ok(_) => Err(Error::Usage(format!("section length must be positive, got `{s}`"))),
            Err(_) => Ok(s.parse::<Length>()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub section_id: String,
    pub length: Length,
    pub region: String,
    /// Which road of the roads file to filter against; required when the
    /// file holds more than one.
    pub road_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub boxes_in: usize,
    pub after_threshold: usize,
    pub after_road: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub stages: StageCounts,
    pub road_id: String,
    pub filter_radius_m: f64,
    pub estimate: AadttEstimate,
    pub report: String,
}

impl PipelineRun {
    pub fn csv_header() -> Vec<&'static str> {
        let mut h = vec!["boxes_in", "after_threshold", "after_road"];
        h.extend(estimate_header());
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![
            self.stages.boxes_in.to_string(),
            self.stages.after_threshold.to_string(),
            self.stages.after_road.to_string(),
        ];
        r.extend(estimate_row(&self.estimate));
        r
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(Self::csv_header())?;
        wtr.write_record(self.csv_row())?;
        wtr.flush()
    }
}

pub fn select_road(roads: Vec<RoadPolyline>, road_id: Option<&str>) -> Result<RoadPolyline, Error> {
    match road_id {
        Some(id) => roads
            .into_iter()
            .find(|r| r.road_id() == id)
            .ok_or_else(|| Error::Config(format!("road `{id}` not found in the roads file"))),
        None if roads.len() == 1 => Ok(roads.into_iter().next().unwrap()),
        None => Err(Error::Config(format!(
            "roads file holds {} roads; choose one with a road id",
            roads.len()
        ))),
    }
}

/// Predictions scoring at least `threshold`. Every box must carry a score.
pub fn threshold_filter(boxes: &[GeoBox], threshold: f64) -> Result<Vec<GeoBox>, EvalError> {
    let mut kept = Vec::new();
    for (index, b) in boxes.iter().enumerate() {
        let s = b.score.ok_or_else(|| EvalError::MissingScore {
            image_id: b.image_id.clone(),
            index,
        })?;
        if s >= threshold {
            kept.push(b.clone());
        }
    }
    Ok(kept)
}

/// Runs every stage on one snapshot. Stage errors name the stage.
pub fn run_pipeline(
    config: &PipelineConfig,
    boxes_path: &Path,
    timestamp: NaiveDateTime,
    section: &Section,
    speed_override: Option<SpeedModel>,
) -> Result<PipelineRun, Error> {
    config.validate()?;
    let roads_path = config
        .roads
        .as_deref()
        .ok_or_else(|| Error::Config("no roads file given".into()))?;
    let model_path = config
        .model
        .as_deref()
        .ok_or_else(|| Error::Config("no factor model file given".into()))?;
    for (what, p) in [("roads", roads_path), ("model", model_path), ("boxes", boxes_path)] {
        if !p.exists() {
            return Err(Error::Config(format!("{what} file {} does not exist", p.display())));
        }
    }

    let boxes = read_boxes(boxes_path).stage("read boxes")?;
    let mut images: Vec<&str> = boxes.iter().map(|b| b.image_id.as_str()).collect();
    images.sort_unstable();
    images.dedup();
    let thresholded = threshold_filter(&boxes, config.threshold).stage("threshold filter")?;
    let roads = read_roads(roads_path, config.filter_radius_m).stage("read roads")?;
    let road = select_road(roads, section.road_id.as_deref()).stage("road filter")?;
    let on_road = road_filter(&thresholded, &road);
    let stages = StageCounts {
        boxes_in: boxes.len(),
        after_threshold: thresholded.len(),
        after_road: on_road.len(),
    };

    let model = read_model(model_path).stage("load model")?;
    let speed = config.speed_for(&section.region, speed_override).stage("speed")?;
    let obs = SnapshotObservation::new(
        &section.section_id,
        on_road.len() as u64,
        section.length,
        timestamp,
        &section.region,
    )
    .stage("count")?;
    let seed = rng::substream_seed(config.seed, "estimate");
    let mut estimate = estimate_aadtt(&obs, &speed, &model, config.samples, seed).stage("estimate")?;
    if images.len() > 1 {
        let w = format!("boxes span {} images; counting all of them as one snapshot", images.len());
        log::warn!("{w}");
        estimate.warnings.insert(0, w);
    }

    let key = obs.key();
    let mut report = String::new();
    let _ = writeln!(report, "section          {} (region {}, length {})", section.section_id, section.region, section.length);
    let _ = writeln!(
        report,
        "timestamp        {} (hour {}, dow {}, month {})",
        timestamp.format("%Y-%m-%dT%H:%M:%S"),
        key.hour(),
        key.dow(),
        key.month()
    );
    let _ = writeln!(report, "boxes read       {}", stages.boxes_in);
    let _ = writeln!(report, "score >= {:<7} {}", config.threshold, stages.after_threshold);
    let _ = writeln!(
        report,
        "on road          {} (road {}, radius {} m)",
        stages.after_road,
        road.road_id(),
        road.filter_radius_m()
    );
    let _ = writeln!(report, "factor model     {} ({})", model.spec, model.spec.formula());
    let _ = writeln!(report, "predicted factor {}", estimate.f_pred);
    let _ = writeln!(report, "speed            {} {}/h, relative sd {}", speed.v0, speed.unit, speed.rel_sd);
    let _ = writeln!(
        report,
        "AADTT            median {:.1}, IQR [{:.1}, {:.1}] from {} samples",
        estimate.median, estimate.q25, estimate.q75, estimate.n_samples
    );
    for w in &estimate.warnings {
        let _ = writeln!(report, "warning          {w}");
    }

    Ok(PipelineRun {
        stages,
        road_id: road.road_id().to_string(),
        filter_radius_m: road.filter_radius_m(),
        estimate,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let c = PipelineConfig::from_toml("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        let c = PipelineConfig::from_toml(
            "roads = \"r.geojson\"\nthreshold = 0.7\nunits = \"mile\"\n[speeds]\nXX = \"80km/h\"\n",
        )
        .unwrap();
        assert_eq!(c.threshold, 0.7);
        assert_eq!(c.section_length("65").unwrap(), Length::miles(65.0));
        assert_eq!(c.section_length("18km").unwrap(), Length::km(18.0));
        let s = c.speed_for("xx", None).unwrap();
        assert_eq!((s.v0, s.unit), (80.0, LengthUnit::Km));
        let o = SpeedModel::new(50.0, LengthUnit::Km).unwrap();
        assert_eq!(c.speed_for("BR", Some(o)).unwrap(), o);
        assert!(c.speed_for("ZZ", None).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(PipelineConfig::from_toml("samples = 0").is_err());
        assert!(PipelineConfig::from_toml("filter_radius_m = -1").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml("[speeds]\nBR = \"fast\"").is_err());
    }

    #[test]
    fn missing_model_is_a_config_error() {
        let c = PipelineConfig {
            roads: Some("/nonexistent/roads.geojson".into()),
            model: Some("/nonexistent/model.json".into()),
            ..Default::default()
        };
        let section = Section {
            section_id: "s".into(),
            length: Length::km(1.0),
            region: "BR".into(),
            road_id: None,
        };
        let t = chrono::NaiveDate::from_ymd_opt(2017, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let e = run_pipeline(&c, Path::new("/nonexistent/b.csv"), t, &section, None).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert_eq!(e.exit_code(), 2);
    }
}
