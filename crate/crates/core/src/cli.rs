//! Command-line front end.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::counts::{
    aadtt_aashto, aadtt_simple, filter_truck_classes, normalize_station_years, sample_stations, sum_by_hour,
    summarize_stations, toll_to_section_counts, ClassFilter, HourlyCount, Section as TollSection, StationSummary,
};
use crate::detect::{default_grid, evaluate_at, tune_threshold, DEFAULT_IOU_MIN};
use crate::error::{Error, StageExt};
use crate::estimate::{Length, SpeedModel};
use crate::factors::{
    cross_validate, fit_factor_model, rows_from_normalized, FactorRow, FitOptions, ModelSpec,
};
use crate::geo::{road_filter, GeoPoint, RoadPolyline, DEFAULT_FILTER_RADIUS_M};
use crate::io::{
    self, parse_timestamp, read_boxes, read_counts, read_mileposts, read_roads, read_trips, write_boxes,
    write_counts, write_model, write_roads, write_samples, write_selection, write_sweep,
};
use crate::pipeline::{run_pipeline, select_road, PipelineConfig, Section};
use crate::synth::{
    gen_hourly, gen_scene, gen_snapshot, straight_road, FactorSurface, Noise, SceneParams, Schedule, TrafficWorld,
};
use crate::validate::{validate_inputs, FileKind};

#[derive(Debug, Parser)]
#[command(name = "aadtt", version, about = "Truck traffic (AADTT) estimation from single-snapshot detections")]
pub struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep the boxes lying within a road's filter radius.
    Roadfilter(RoadfilterArgs),
    /// Count error, precision and recall at one detection threshold.
    EvalDetect(EvalDetectArgs),
    /// Sweep the detection threshold and report the count-error optimum.
    TuneThreshold(TuneArgs),
    /// Turn toll trips into hourly counts for one section.
    IngestToll(IngestTollArgs),
    /// Divide each station-year by its mean hourly count.
    Normalize(NormalizeArgs),
    /// AADTT per station-year from hourly counts.
    Aadtt(AadttArgs),
    /// Pick stations per region up to a station-year target.
    SampleStations(SampleArgs),
    /// Fit a time-variation factor model.
    TrainFactors(TrainArgs),
    /// Leave-one-region-out comparison of factor models.
    Crossval(CrossvalArgs),
    /// Estimate AADTT for a section from one snapshot of detections.
    Estimate(EstimateArgs),
    /// Generate synthetic inputs with a known truth.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Check input files against their formats.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RoadArgs {
    /// Roads GeoJSON (LineString features with a road_id property).
    #[arg(long)]
    pub roads: PathBuf,
    /// Road to use when the file holds several.
    #[arg(long)]
    pub road_id: Option<String>,
    /// Filter radius in meters for roads without one.
    #[arg(long, default_value_t = DEFAULT_FILTER_RADIUS_M)]
    pub radius: f64,
}

impl RoadArgs {
    fn load(&self) -> Result<RoadPolyline, Error> {
        let roads = read_roads(&self.roads, self.radius)?;
        select_road(roads, self.road_id.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct RoadfilterArgs {
    #[arg(long)]
    pub boxes: PathBuf,
    #[command(flatten)]
    pub road: RoadArgs,
    /// Output boxes CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectInputs {
    /// Predicted boxes CSV (with scores).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth boxes CSV.
    #[arg(long)]
    pub truth: PathBuf,
    /// Road-filter both sides against this roads file first.
    #[arg(long)]
    pub roads: Option<PathBuf>,
    #[arg(long, requires = "roads")]
    pub road_id: Option<String>,
    #[arg(long, default_value_t = DEFAULT_FILTER_RADIUS_M)]
    pub radius: f64,
    /// Minimum IoU for a match.
    #[arg(long, default_value_t = DEFAULT_IOU_MIN)]
    pub iou: f64,
}

impl DetectInputs {
    fn road(&self) -> Result<Option<RoadPolyline>, Error> {
        self.roads
            .as_deref()
            .map(|p| select_road(read_roads(p, self.radius)?, self.road_id.as_deref()))
            .transpose()
    }
}

#[derive(Debug, Args)]
pub struct EvalDetectArgs {
    #[command(flatten)]
    pub inputs: DetectInputs,
    #[arg(long)]
    pub threshold: f64,
    /// Per-image counts CSV.
    #[arg(long)]
    pub per_image: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub inputs: DetectInputs,
    /// Sweep CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassChoice {
    /// Keep every record.
    Any,
    /// High vehicles with three or more axles (`<H|L><axles>` codes).
    Ny,
    /// Census classes with 0, 2, 3, 4 and 15 dropped.
    Caltrans,
}

impl ClassChoice {
    fn filter(self) -> ClassFilter {
        match self {
            ClassChoice::Any => ClassFilter::identity(),
            ClassChoice::Ny => ClassFilter::ny_thruway(),
            ClassChoice::Caltrans => ClassFilter::caltrans(),
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestTollArgs {
    #[arg(long)]
    pub trips: PathBuf,
    /// CSV plaza,milepost_miles.
    #[arg(long)]
    pub mileposts: PathBuf,
    /// Section as two plazas, `A,B`.
    #[arg(long, value_parser = parse_plaza_pair)]
    pub section: (String, String),
    #[arg(long, default_value_t = 60.0)]
    pub speed_mph: f64,
    #[arg(long, default_value = "NY")]
    pub region: String,
    #[arg(long, value_enum, default_value_t = ClassChoice::Ny)]
    pub classes: ClassChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CountInputs {
    /// Hourly counts CSV (repeatable).
    #[arg(long = "counts", required = true)]
    pub counts: Vec<PathBuf>,
    /// Truck class filter applied before rows of one hour are summed.
    #[arg(long, value_enum, default_value_t = ClassChoice::Any)]
    pub classes: ClassChoice,
}

impl CountInputs {
    fn load(&self) -> Result<Vec<HourlyCount>, Error> {
        let mut all = Vec::new();
        for p in &self.counts {
            all.extend(read_counts(p)?);
        }
        let kept = filter_truck_classes(&all, &self.classes.filter())?;
        Ok(sum_by_hour(&kept))
    }
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    #[command(flatten)]
    pub inputs: CountInputs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AadttMethod {
    Simple,
    Aashto,
}

#[derive(Debug, Args)]
pub struct AadttArgs {
    #[command(flatten)]
    pub inputs: CountInputs,
    #[arg(long, value_enum, default_value_t = AadttMethod::Simple)]
    pub method: AadttMethod,
    /// CSV station_id,region,year,method,aadtt; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub inputs: CountInputs,
    /// Station-year equivalents per region.
    #[arg(long, default_value_t = 10.0)]
    pub target: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV region,rank,station_id; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainingData {
    #[command(flatten)]
    pub inputs: CountInputs,
    /// Restrict to these regions (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub regions: Vec<String>,
    /// Station selection CSV from sample-stations.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainingData {
    /// Normalized rows per region. Station-years without positive counts are
    /// skipped with a warning.
    fn rows(&self) -> Result<BTreeMap<String, Vec<FactorRow>>, Error> {
        let mut counts = self.inputs.load()?;
        if !self.regions.is_empty() {
            let wanted: BTreeSet<&str> = self.regions.iter().map(String::as_str).collect();
            counts.retain(|c| wanted.contains(c.region.as_str()));
            for r in &wanted {
                if !counts.iter().any(|c| c.region == *r) {
                    return Err(Error::Usage(format!("no counts for region `{r}`")));
                }
            }
        }
        if let Some(p) = &self.selection {
            let ids = read_selection(p)?;
            counts.retain(|c| ids.contains(&c.station_id));
        }
        let region_of: BTreeMap<String, String> =
            counts.iter().map(|c| (c.station_id.clone(), c.region.clone())).collect();
        let mut by_region: BTreeMap<String, Vec<FactorRow>> = BTreeMap::new();
        for ((station, year), n) in normalize_station_years(&counts) {
            match n {
                Ok(series) => by_region
                    .entry(region_of[&station].clone())
                    .or_default()
                    .extend(rows_from_normalized(&series)),
                Err(e) => log::warn!("skipping {station}/{year}: {e}"),
            }
        }
        if by_region.is_empty() {
            return Err(Error::Usage("no usable counts".into()));
        }
        Ok(by_region)
    }

    fn options(&self) -> FitOptions {
        FitOptions {
            seed: self.seed,
            ..FitOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: TrainingData,
    /// Model spec: linear-1 .. linear-6 or rf.
    #[arg(long)]
    pub spec: ModelSpec,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub data: TrainingData,
    /// Comma-separated specs or `all`.
    #[arg(long, default_value = "all", value_parser = parse_specs)]
    pub specs: std::vec::Vec<ModelSpec>,
    /// CSV of per-fold errors; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub boxes: PathBuf,
    /// Roads GeoJSON.
    #[arg(long = "road", alias = "roads")]
    pub roads: Option<PathBuf>,
    #[arg(long)]
    pub road_id: Option<String>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_parser = parse_timestamp)]
    pub timestamp: NaiveDateTime,
    /// `18km`, `65mi`, or a bare number in the configured unit.
    #[arg(long)]
    pub section_length: String,
    #[arg(long)]
    pub region: String,
    #[arg(long, default_value = "section")]
    pub section_id: String,
    /// Mean speed, e.g. `80km/h` or `65mph`.
    #[arg(long)]
    pub speed: Option<SpeedModel>,
    #[arg(long)]
    pub rel_sd: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Machine-readable CSV row.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Every Monte Carlo sample, for plotting.
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
    /// Human-readable report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl EstimateArgs {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(r) = &self.roads {
            c.roads = Some(r.clone());
        }
        if let Some(m) = &self.model {
            c.model = Some(m.clone());
        }
        if let Some(r) = self.radius {
            c.filter_radius_m = r;
        }
        if let Some(t) = self.threshold {
            c.threshold = t;
        }
        if let Some(n) = self.samples {
            c.samples = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(s) = self.rel_sd {
            c.rel_sd = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Hourly counts for a set of stations.
    Hourly(SynthHourlyArgs),
    /// One snapshot count for a section, optionally as boxes on a straight road.
    Snapshot(SynthSnapshotArgs),
    /// Predicted and true boxes around a straight road.
    Scene(SynthSceneArgs),
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    #[arg(long, default_value_t = 2400.0)]
    pub aadtt: f64,
    #[arg(long, default_value_t = 2017)]
    pub year: i32,
    /// Factor on Sundays relative to the weekend level.
    #[arg(long)]
    pub sunday_ban: Option<f64>,
    /// Amplitude of the month-of-year cycle.
    #[arg(long, default_value_t = 0.0)]
    pub seasonal: f64,
    /// `none`, `poisson`, or `gaussian:<rel_sd>`.
    #[arg(long, default_value = "poisson", value_parser = parse_noise)]
    pub noise: Noise,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl WorldArgs {
    fn world(&self) -> Result<TrafficWorld, Error> {
        let surface = FactorSurface {
            sunday_ban: self.sunday_ban,
            seasonal_amplitude: self.seasonal,
            ..FactorSurface::default()
        };
        Ok(TrafficWorld::new(self.aadtt, self.year, surface, self.noise, self.seed)?)
    }
}

#[derive(Debug, Args)]
pub struct SynthHourlyArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, default_value = "XX")]
    pub region: String,
    #[arg(long, default_value_t = 1)]
    pub stations: usize,
    /// `full`, `first-days:<n>`, `random-days:<p>`, `random-hours:<p>`, or `block:<days>`.
    #[arg(long, default_value = "full", value_parser = parse_schedule)]
    pub schedule: Schedule,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthSnapshotArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, value_parser = parse_timestamp)]
    pub timestamp: NaiveDateTime,
    #[arg(long, default_value = "18km")]
    pub section_length: Length,
    #[arg(long, default_value = "90km/h")]
    pub speed: SpeedModel,
    #[arg(long, default_value = "XX")]
    pub region: String,
    #[arg(long, default_value = "section")]
    pub section_id: String,
    /// Snapshot summary CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the count as scored boxes along a straight road.
    #[arg(long, requires = "roads_out")]
    pub boxes_out: Option<PathBuf>,
    #[arg(long, requires = "boxes_out")]
    pub roads_out: Option<PathBuf>,
    /// Off-road distractor boxes added to `--boxes-out`.
    #[arg(long, default_value_t = 0)]
    pub n_off: usize,
}

#[derive(Debug, Args)]
pub struct SynthSceneArgs {
    #[arg(long, default_value_t = 500.0)]
    pub road_length_m: f64,
    #[arg(long, default_value_t = DEFAULT_FILTER_RADIUS_M)]
    pub radius: f64,
    #[arg(long, default_value = "img-0")]
    pub image_id: String,
    #[arg(long, default_value_t = 7)]
    pub n_on: usize,
    #[arg(long, default_value_t = 13)]
    pub n_off: usize,
    #[arg(long, default_value_t = 0)]
    pub false_positives: usize,
    #[arg(long, default_value_t = 0.0)]
    pub miss_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub jitter_m: f64,
    #[arg(long, default_value_t = 0.9)]
    pub tp_score: f64,
    #[arg(long, default_value_t = 0.1)]
    pub fp_score: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub pred_out: PathBuf,
    #[arg(long)]
    pub truth_out: PathBuf,
    #[arg(long)]
    pub roads_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub boxes: Vec<PathBuf>,
    #[arg(long)]
    pub roads: Vec<PathBuf>,
    #[arg(long)]
    pub counts: Vec<PathBuf>,
    #[arg(long)]
    pub trips: Vec<PathBuf>,
    #[arg(long)]
    pub mileposts: Vec<PathBuf>,
    #[arg(long)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub config: Vec<PathBuf>,
}

fn parse_plaza_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
            Ok((a.trim().to_string(), b.trim().to_string()))
        }
        _ => Err(format!("expected two plazas `A,B`, got `{s}`")),
    }
}

fn parse_specs(s: &str) -> Result<Vec<ModelSpec>, String> {
    ModelSpec::parse_list(s).map_err(|e| e.to_string())
}

fn parse_noise(s: &str) -> Result<Noise, String> {
    match s.split_once(':') {
        None if s == "none" => Ok(Noise::None),
        None if s == "poisson" => Ok(Noise::Poisson),
        Some(("gaussian", sd)) => sd
            .parse()
            .map(|rel_sd| Noise::Gaussian { rel_sd })
            .map_err(|_| format!("bad relative sd `{sd}`")),
        _ => Err(format!("unknown noise `{s}`; use none, poisson, or gaussian:<rel_sd>")),
    }
}

fn parse_schedule(s: &str) -> Result<Schedule, String> {
    let bad = |v: &str| format!("bad schedule value `{v}`");
    match s.split_once(':') {
        None if s == "full" => Ok(Schedule::Full),
        Some(("first-days", n)) => n.parse().map(Schedule::FirstDaysOfMonth).map_err(|_| bad(n)),
        Some(("random-days", p)) => p.parse().map(|fraction| Schedule::RandomDays { fraction }).map_err(|_| bad(p)),
        Some(("random-hours", p)) => p.parse().map(|fraction| Schedule::RandomHours { fraction }).map_err(|_| bad(p)),
        Some(("block", d)) => d.parse().map(|days| Schedule::Block { days }).map_err(|_| bad(d)),
        _ => Err(format!("unknown schedule `{s}`")),
    }
}

fn read_selection(path: &Path) -> Result<BTreeSet<String>, Error> {
    let mut diags = Vec::new();
    let recs = io::csv_records(io::open(path)?, &["region", "rank", "station_id"], &mut diags);
    if !diags.is_empty() {
        return Err(io::invalid(path, diags).into());
    }
    Ok(recs.into_iter().map(|(_, r)| r[2].to_string()).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

/// A file when given, stdout otherwise.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Roadfilter(a) => roadfilter(a),
        Command::EvalDetect(a) => eval_detect(a),
        Command::TuneThreshold(a) => tune(a),
        Command::IngestToll(a) => ingest_toll(a),
        Command::Normalize(a) => normalize_cmd(a),
        Command::Aadtt(a) => aadtt_cmd(a),
        Command::SampleStations(a) => sample_cmd(a),
        Command::TrainFactors(a) => train(a),
        Command::Crossval(a) => crossval(a),
        Command::Estimate(a) => estimate(a),
        Command::Synth(s) => synth(s),
        Command::Validate(a) => validate(a),
    }
}

fn roadfilter(a: RoadfilterArgs) -> Result<(), Error> {
    let boxes = read_boxes(&a.boxes).stage("read boxes")?;
    let road = a.road.load().stage("read roads")?;
    let kept = road_filter(&boxes, &road);
    write_boxes(&a.out, &kept)?;
    println!(
        "{} of {} boxes within {} m of road {}",
        kept.len(),
        boxes.len(),
        road.filter_radius_m(),
        road.road_id()
    );
    Ok(())
}

fn eval_detect(a: EvalDetectArgs) -> Result<(), Error> {
    let preds = read_boxes(&a.inputs.pred).stage("read predictions")?;
    let truths = read_boxes(&a.inputs.truth).stage("read truths")?;
    let road = a.inputs.road().stage("read roads")?;
    let ev = evaluate_at(&preds, &truths, road.as_ref(), a.threshold, a.inputs.iou).stage("evaluate")?;
    let p = &ev.point;
    let mut out = csv::Writer::from_writer(std::io::stdout().lock());
    out.write_record(["threshold", "count_error", "precision", "recall", "true_positives", "false_positives", "false_negatives"])
        .map_err(std::io::Error::from)?;
    out.write_record([
        p.threshold.to_string(),
        p.count_error.to_string(),
        p.precision.to_string(),
        p.recall.to_string(),
        p.true_positives.to_string(),
        p.false_positives.to_string(),
        p.false_negatives.to_string(),
    ])
    .map_err(std::io::Error::from)?;
    out.flush()?;
    if let Some(path) = &a.per_image {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["image_id", "c_pred", "c_true"]).map_err(std::io::Error::from)?;
        for pair in &ev.pairs {
            w.write_record([pair.image_id.clone(), pair.c_pred.to_string(), pair.c_true.to_string()])
                .map_err(std::io::Error::from)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn tune(a: TuneArgs) -> Result<(), Error> {
    let preds = read_boxes(&a.inputs.pred).stage("read predictions")?;
    let truths = read_boxes(&a.inputs.truth).stage("read truths")?;
    let road = a.inputs.road().stage("read roads")?;
    let sweep = tune_threshold(&preds, &truths, road.as_ref(), &default_grid(), a.inputs.iou).stage("sweep")?;
    write_sweep(sink(a.out.as_deref())?, &sweep)?;
    let o = &sweep.optimum;
    let summary = format!(
        "optimum threshold {} count_error {} precision {} recall {}",
        o.threshold, o.count_error, o.precision, o.recall
    );
    if a.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn ingest_toll(a: IngestTollArgs) -> Result<(), Error> {
    let trips = read_trips(&a.trips).stage("read trips")?;
    let mileposts = read_mileposts(&a.mileposts).stage("read mileposts")?;
    let trucks = filter_truck_classes(&trips, &a.classes.filter()).stage("class filter")?;
    let section = TollSection::new(a.section.0, a.section.1);
    let sc = toll_to_section_counts(&trucks, &mileposts, &section, a.speed_mph, &a.region).stage("section counts")?;
    write_counts(&a.out, &sc.counts)?;
    println!(
        "section {}: {} of {} truck trips traverse it, {} hours written",
        section.id(),
        sc.traversing,
        trucks.len(),
        sc.counts.len()
    );
    Ok(())
}

fn normalize_cmd(a: NormalizeArgs) -> Result<(), Error> {
    let counts = a.inputs.load().stage("read counts")?;
    let mut out = Vec::new();
    for ((station, year), n) in normalize_station_years(&counts) {
        match n {
            Ok(s) => {
                log::info!("{station}/{year}: mean hourly count {}", s.mean);
                out.extend(s.counts);
            }
            Err(e) => log::warn!("skipping {station}/{year}: {e}"),
        }
    }
    write_counts(&a.out, &out)?;
    Ok(())
}

fn aadtt_cmd(a: AadttArgs) -> Result<(), Error> {
    let counts = a.inputs.load().stage("read counts")?;
    let mut groups: BTreeMap<(String, i32), Vec<HourlyCount>> = BTreeMap::new();
    for c in counts {
        groups.entry((c.station_id.clone(), c.year())).or_default().push(c);
    }
    let method = match a.method {
        AadttMethod::Simple => "simple",
        AadttMethod::Aashto => "aashto",
    };
    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    w.write_record(["station_id", "region", "year", "method", "aadtt"]).map_err(std::io::Error::from)?;
    for ((station, year), series) in groups {
        let v = match a.method {
            AadttMethod::Simple => aadtt_simple(&series),
            AadttMethod::Aashto => aadtt_aashto(&series),
        };
        let v = match v {
            Ok(v) => v,
            Err(e) => {
                log::warn!("{station}/{year}: {e}");
                continue;
            }
        };
        w.write_record([station, series[0].region.clone(), year.to_string(), method.into(), v.to_string()])
            .map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn sample_cmd(a: SampleArgs) -> Result<(), Error> {
    let counts = a.inputs.load().stage("read counts")?;
    let mut by_region: BTreeMap<String, Vec<StationSummary>> = BTreeMap::new();
    for s in summarize_stations(&counts) {
        by_region.entry(s.region.clone()).or_default().push(s);
    }
    let sel = sample_stations(&by_region, a.target, a.seed);
    write_selection(sink(a.out.as_deref())?, &sel)?;
    for s in &sel {
        eprintln!(
            "{}: {} station(s), {:.2} station-years{}",
            s.region,
            s.stations.len(),
            s.equivalents,
            if s.exhausted { " (exhausted)" } else { "" }
        );
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Error> {
    let by_region = a.data.rows().stage("load training counts")?;
    let regions: Vec<String> = by_region.keys().cloned().collect();
    let rows: Vec<FactorRow> = by_region.into_values().flatten().collect();
    let model = fit_factor_model(a.spec, &rows, &regions, &a.data.options()).stage("fit")?;
    write_model(&a.out, &model)?;
    println!(
        "{} ({}) fit on {} rows from {}; feasible: {}",
        model.spec,
        model.spec.formula(),
        rows.len(),
        regions.join(","),
        model.feasible
    );
    if !model.feasible {
        log::warn!("model predicts a nonpositive factor for some time key; estimate will refuse it");
    }
    Ok(())
}

fn crossval(a: CrossvalArgs) -> Result<(), Error> {
    let by_region = a.data.rows().stage("load training counts")?;
    let cv = cross_validate(&by_region, &a.specs, &a.data.options()).stage("cross-validate")?;
    io::write_crossval(sink(a.out.as_deref())?, &cv)?;
    for r in &cv.skipped_regions {
        log::warn!("region {r} has no rows and was skipped");
    }
    match cv.best() {
        Some(b) => eprintln!("best: {} mean MAE {}", b.spec, b.mean_mae.unwrap_or(f64::NAN)),
        None => eprintln!("no feasible spec"),
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<(), Error> {
    let config = a.config()?;
    let section = Section {
        section_id: a.section_id.clone(),
        length: config.section_length(&a.section_length)?,
        region: a.region.clone(),
        road_id: a.road_id.clone(),
    };
    let run = run_pipeline(&config, &a.boxes, a.timestamp, &section, a.speed)?;
    let e = &run.estimate;
    println!(
        "median {:.1} q25 {:.1} q75 {:.1} c_I {}",
        e.median, e.q25, e.q75, e.observation.c_i
    );
    for w in &e.warnings {
        log::warn!("{w}");
    }
    if let Some(p) = &a.out {
        run.write_csv(create(p)?)?;
    }
    if let Some(p) = &a.samples_out {
        write_samples(create(p)?, e)?;
    }
    if let Some(p) = &a.report {
        let mut w = create(p)?;
        w.write_all(run.report.as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

const SYNTH_ORIGIN: (f64, f64) = (-73.75, 42.65);

fn synth(cmd: SynthCommand) -> Result<(), Error> {
    match cmd {
        SynthCommand::Hourly(a) => {
            let world = a.world.world()?;
            let counts = gen_hourly(&world, &a.region, a.stations, &a.schedule, a.world.seed)?;
            write_counts(&a.out, &counts)?;
            println!("{} hourly counts for {} station(s)", counts.len(), a.stations);
        }
        SynthCommand::Snapshot(a) => {
            let world = a.world.world()?;
            let snap = gen_snapshot(&world, a.section_length, a.speed, a.timestamp, a.world.seed);
            let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
            w.write_record([
                "section_id", "timestamp", "region", "section_length", "length_unit", "v0", "speed_unit",
                "aadtt_true", "expected_count", "c_i",
            ])
            .map_err(std::io::Error::from)?;
            w.write_record([
                a.section_id.clone(),
                snap.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
                a.region.clone(),
                snap.section_length.value.to_string(),
                snap.section_length.unit.to_string(),
                snap.speed.v0.to_string(),
                format!("{}/h", snap.speed.unit),
                world.aadtt_true.to_string(),
                snap.expected_count.to_string(),
                snap.count.to_string(),
            ])
            .map_err(std::io::Error::from)?;
            w.flush()?;
            if let (Some(boxes_out), Some(roads_out)) = (&a.boxes_out, &a.roads_out) {
                let length_m = a.section_length.to_unit(crate::estimate::LengthUnit::Km) * 1000.0;
                let road = straight_road(origin(), length_m, DEFAULT_FILTER_RADIUS_M)?;
                let params = SceneParams {
                    image_id: a.section_id.clone(),
                    n_on: snap.count as usize,
                    n_off: a.n_off,
                    ..SceneParams::default()
                };
                let scene = gen_scene(&road, &params, a.world.seed)?;
                write_boxes(boxes_out, &scene.predictions)?;
                write_roads(roads_out, &[road])?;
            }
        }
        SynthCommand::Scene(a) => {
            let road = straight_road(origin(), a.road_length_m, a.radius)?;
            let params = SceneParams {
                image_id: a.image_id,
                n_on: a.n_on,
                n_off: a.n_off,
                jitter_m: a.jitter_m,
                miss_rate: a.miss_rate,
                n_false_positives: a.false_positives,
                tp_score: a.tp_score,
                fp_score: a.fp_score,
                ..SceneParams::default()
            };
            let scene = gen_scene(&road, &params, a.seed)?;
            write_boxes(&a.pred_out, &scene.predictions)?;
            write_boxes(&a.truth_out, &scene.truths)?;
            write_roads(&a.roads_out, &[road])?;
            println!("{} predictions, {} truths", scene.predictions.len(), scene.truths.len());
        }
    }
    Ok(())
}

fn origin() -> GeoPoint {
    GeoPoint::new(SYNTH_ORIGIN.0, SYNTH_ORIGIN.1).expect("valid origin")
}

fn validate(a: ValidateArgs) -> Result<(), Error> {
    let mut files = Vec::new();
    for (paths, kind) in [
        (&a.boxes, FileKind::Boxes),
        (&a.roads, FileKind::Roads),
        (&a.counts, FileKind::Counts),
        (&a.trips, FileKind::Trips),
        (&a.mileposts, FileKind::Mileposts),
        (&a.model, FileKind::Model),
        (&a.config, FileKind::Config),
    ] {
        files.extend(paths.iter().map(|p| (p.clone(), kind)));
    }
    if files.is_empty() {
        return Err(Error::Usage("nothing to validate; pass at least one file".into()));
    }
    let reports = validate_inputs(&files);
    for r in &reports {
        println!("{r}");
    }
    let bad = reports.iter().filter(|r| !r.ok()).count();
    if bad > 0 {
        return Err(Error::Config(format!("{bad} of {} file(s) invalid", reports.len())));
    }
    Ok(())
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { crate::error::EXIT_USAGE } else { crate::error::EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .try_init();
    match run(cli) {
        Ok(()) => crate::error::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
