//! Synthetic worlds with known AADTT and factor surfaces, and generators for
//! hourly counters, snapshots and detection scenes.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::counts::{CountsError, HourlyCount};
use crate::detect::{iou, DEFAULT_IOU_MIN};
use crate::estimate::{EstimateError, Length, SnapshotObservation, SpeedModel};
use crate::factors::TimeKey;
use crate::geo::{
    box_distance_to_road, unproject_local, GeoBox, GeoError, GeoPoint, PlanarPoint, RoadPolyline,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("could not place {0} after many attempts")]
    Placement(&'static str),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Counts(#[from] CountsError),
}

/// Unnormalized multiplicative surface:
/// `(1 + a·sin(2π(h − peak)/24)) · day(d) · (1 + s·sin(2π(m − 4)/12))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSurface {
    pub diurnal_amplitude: f64,
    pub peak_hour: f64,
    pub weekday_level: f64,
    pub weekend_level: f64,
    /// Sunday level replacing `weekend_level`, for regions where trucks may
    /// not run on Sundays.
    pub sunday_ban: Option<f64>,
    pub seasonal_amplitude: f64,
}

impl Default for FactorSurface {
    fn default() -> Self {
        FactorSurface {
            diurnal_amplitude: 0.6,
            peak_hour: 14.0,
            weekday_level: 1.12,
            weekend_level: 0.7,
            sunday_ban: None,
            seasonal_amplitude: 0.0,
        }
    }
}

impl FactorSurface {
    pub fn raw(&self, key: TimeKey) -> f64 {
        let tau = std::f64::consts::TAU;
        let diurnal = 1.0 + self.diurnal_amplitude * (tau * (key.hour() as f64 - self.peak_hour) / 24.0).sin();
        let day = match key.dow() {
            7 => self.sunday_ban.unwrap_or(self.weekend_level),
            6 => self.weekend_level,
            _ => self.weekday_level,
        };
        let season = 1.0 + self.seasonal_amplitude * (tau * (key.month() as f64 - 4.0) / 12.0).sin();
        diurnal * day * season
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    None,
    Poisson,
    /// Normal with standard deviation `rel_sd` times the mean, floored at 0.
    Gaussian { rel_sd: f64 },
}

/// A traffic world for one calendar year. The surface is rescaled so the
/// factor averages exactly 1 over that year's hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficWorld {
    pub aadtt_true: f64,
    pub year: i32,
    pub surface: FactorSurface,
    pub noise: Noise,
    pub seed: u64,
    scale: f64,
}

pub fn year_hours(year: i32) -> impl Iterator<Item = NaiveDateTime> {
    let start = NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("valid year")
        .and_hms_opt(0, 0, 0)
        .unwrap();
    (0..)
        .map(move |h| start + Duration::hours(h))
        .take_while(move |t| t.year() == year)
}

impl TrafficWorld {
    pub fn new(
        aadtt_true: f64,
        year: i32,
        surface: FactorSurface,
        noise: Noise,
        seed: u64,
    ) -> Result<Self, SynthError> {
        if !(aadtt_true.is_finite() && aadtt_true >= 0.0) {
            return Err(SynthError::InvalidWorld(format!("aadtt_true = {aadtt_true}")));
        }
        if NaiveDate::from_ymd_opt(year, 1, 1).is_none() {
            return Err(SynthError::InvalidWorld(format!("year {year}")));
        }
        if let Noise::Gaussian { rel_sd } = noise {
            if !(rel_sd.is_finite() && rel_sd >= 0.0) {
                return Err(SynthError::InvalidWorld(format!("rel_sd = {rel_sd}")));
            }
        }
        if let Some(k) = TimeKey::grid().find(|&k| !(surface.raw(k) > 0.0 && surface.raw(k).is_finite())) {
            return Err(SynthError::InvalidWorld(format!("surface is not positive at {k:?}")));
        }
        let (sum, n) = year_hours(year).fold((0.0, 0usize), |(s, n), t| {
            (s + surface.raw(TimeKey::from_datetime(t)), n + 1)
        });
        Ok(TrafficWorld {
            aadtt_true,
            year,
            surface,
            noise,
            seed,
            scale: n as f64 / sum,
        })
    }

    pub fn factor(&self, key: TimeKey) -> f64 {
        self.surface.raw(key) * self.scale
    }

    /// Factor table indexed by [`TimeKey::index`].
    pub fn factor_table(&self) -> Vec<f64> {
        TimeKey::grid().map(|k| self.factor(k)).collect()
    }

    pub fn expected_hourly(&self, t: NaiveDateTime) -> f64 {
        self.aadtt_true / 24.0 * self.factor(TimeKey::from_datetime(t))
    }

    pub fn draw(&self, mean: f64, rng: &mut ChaCha8Rng) -> f64 {
        match self.noise {
            Noise::None => mean,
            _ if mean <= 0.0 => 0.0,
            Noise::Poisson => Poisson::new(mean).expect("positive mean").sample(rng),
            Noise::Gaussian { rel_sd } => {
                let z: f64 = rng.sample(StandardNormal);
                (mean * (1.0 + rel_sd * z)).max(0.0)
            }
        }
    }
}

/// Which hours of the year a station reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Full,
    /// Days `1..=n` of every month.
    FirstDaysOfMonth(u32),
    /// Each day kept independently with this probability.
    RandomDays { fraction: f64 },
    /// Each hour kept independently with this probability.
    RandomHours { fraction: f64 },
    /// One contiguous run of whole days starting at a random day.
    Block { days: u32 },
    Dates(Vec<NaiveDate>),
}

fn schedule_mask(schedule: &Schedule, year: i32, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let hours: Vec<NaiveDateTime> = year_hours(year).collect();
    let n_days = hours.len() / 24;
    match schedule {
        Schedule::Full => vec![true; hours.len()],
        Schedule::FirstDaysOfMonth(n) => hours.iter().map(|t| t.day() <= *n).collect(),
        Schedule::RandomDays { fraction } => {
            let days: Vec<bool> = (0..n_days).map(|_| rng.random::<f64>() < *fraction).collect();
            (0..hours.len()).map(|i| days[i / 24]).collect()
        }
        Schedule::RandomHours { fraction } => hours.iter().map(|_| rng.random::<f64>() < *fraction).collect(),
        Schedule::Block { days } => {
            let len = (*days as usize).min(n_days);
            let start = rng.random_range(0..=n_days - len);
            (0..hours.len())
                .map(|i| (start..start + len).contains(&(i / 24)))
                .collect()
        }
        Schedule::Dates(dates) => hours.iter().map(|t| dates.contains(&t.date())).collect(),
    }
}

/// Hourly counts for `n_stations` stations in `region`, ids `{region}-NNN`,
/// ordered by station then time.
pub fn gen_hourly(
    world: &TrafficWorld,
    region: &str,
    n_stations: usize,
    schedule: &Schedule,
    seed: u64,
) -> Result<Vec<HourlyCount>, SynthError> {
    let table = world.factor_table();
    let mut out = Vec::new();
    for s in 0..n_stations {
        let mut rng = rng::indexed_substream(seed, &format!("synth/hourly/{region}"), s as u64);
        let mask = schedule_mask(schedule, world.year, &mut rng);
        let id = format!("{region}-{s:03}");
        for (t, keep) in year_hours(world.year).zip(mask) {
            if !keep {
                continue;
            }
            let mean = world.aadtt_true / 24.0 * table[TimeKey::from_datetime(t).index()];
            let count = world.draw(mean, &mut rng);
            out.push(HourlyCount::new(id.clone(), region, t, count)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSnapshot {
    pub timestamp: NaiveDateTime,
    pub section_length: Length,
    pub speed: SpeedModel,
    /// `aadtt · f(key) · s / (24 v)`.
    pub expected_count: f64,
    pub count: u64,
}

impl SyntheticSnapshot {
    pub fn observation(&self, section_id: &str, region: &str) -> Result<SnapshotObservation, EstimateError> {
        SnapshotObservation::new(section_id, self.count, self.section_length, self.timestamp, region)
    }
}

/// One simulated image of a section: a Poisson count whose mean inverts the
/// AADTT relation at the snapshot's time key.
pub fn gen_snapshot(
    world: &TrafficWorld,
    section_length: Length,
    speed: SpeedModel,
    timestamp: NaiveDateTime,
    seed: u64,
) -> SyntheticSnapshot {
    let s = section_length.to_unit(speed.unit).max(0.0);
    let f = world.factor(TimeKey::from_datetime(timestamp));
    let expected_count = world.aadtt_true * f * s / (24.0 * speed.v0);
    let mut rng = rng::substream(seed, "synth/snapshot");
    let count = if expected_count > 0.0 {
        Poisson::new(expected_count).expect("positive mean").sample(&mut rng) as u64
    } else {
        0
    };
    SyntheticSnapshot {
        timestamp,
        section_length,
        speed,
        expected_count,
        count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub image_id: String,
    pub n_on: usize,
    pub n_off: usize,
    pub box_length_m: f64,
    pub box_width_m: f64,
    /// Predictions are truths shifted by up to this many meters per axis.
    pub jitter_m: f64,
    /// Probability that a truth has no prediction.
    pub miss_rate: f64,
    /// On-road predictions that overlap no truth.
    pub n_false_positives: usize,
    pub tp_score: f64,
    pub fp_score: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            image_id: "img-0".into(),
            n_on: 7,
            n_off: 13,
            box_length_m: 16.0,
            box_width_m: 3.5,
            jitter_m: 0.0,
            miss_rate: 0.0,
            n_false_positives: 0,
            tp_score: 0.9,
            fp_score: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub predictions: Vec<GeoBox>,
    pub truths: Vec<GeoBox>,
}

struct Placer<'a> {
    road: &'a RoadPolyline,
    line: crate::geo::ProjectedPolyline,
    params: &'a SceneParams,
}

const MAX_ATTEMPTS: usize = 10_000;

impl Placer<'_> {
    fn make_box(&self, anchor: PlanarPoint, rng: &mut ChaCha8Rng, score: Option<f64>) -> Result<GeoBox, SynthError> {
        let (mut w, mut h) = (self.params.box_length_m, self.params.box_width_m);
        if rng.random::<bool>() {
            std::mem::swap(&mut w, &mut h);
        }
        let sx = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let sy = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let corners = [
            anchor,
            PlanarPoint::new(anchor.x + sx * w, anchor.y),
            PlanarPoint::new(anchor.x + sx * w, anchor.y + sy * h),
            PlanarPoint::new(anchor.x, anchor.y + sy * h),
        ];
        self.to_geo(corners, score)
    }

    fn to_geo(&self, corners: [PlanarPoint; 4], score: Option<f64>) -> Result<GeoBox, SynthError> {
        let origin = self.line.origin;
        let geo = [
            unproject_local(origin, corners[0])?,
            unproject_local(origin, corners[1])?,
            unproject_local(origin, corners[2])?,
            unproject_local(origin, corners[3])?,
        ];
        Ok(GeoBox::new(self.params.image_id.clone(), "truck", score, geo)?)
    }

    fn on_road(&self, rng: &mut ChaCha8Rng, score: Option<f64>) -> Result<GeoBox, SynthError> {
        let r = self.road.filter_radius_m();
        let (p, _) = self.line.point_at(rng.random_range(0.0..=self.line.length()));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let dist = 0.9 * r * rng.random::<f64>().sqrt();
        let anchor = PlanarPoint::new(p.x + dist * angle.cos(), p.y + dist * angle.sin());
        let b = self.make_box(anchor, rng, score)?;
        debug_assert!(box_distance_to_road(&b, &self.line) <= r);
        Ok(b)
    }

    fn off_road(&self, rng: &mut ChaCha8Rng) -> Result<GeoBox, SynthError> {
        let r = self.road.filter_radius_m();
        let margin = 3.0 * r + 4.0 * self.params.box_length_m + 50.0;
        let xs = self.line.points.iter().map(|p| p.x);
        let ys = self.line.points.iter().map(|p| p.y);
        let (x0, x1) = (xs.clone().fold(f64::INFINITY, f64::min) - margin, xs.fold(f64::NEG_INFINITY, f64::max) + margin);
        let (y0, y1) = (ys.clone().fold(f64::INFINITY, f64::min) - margin, ys.fold(f64::NEG_INFINITY, f64::max) + margin);
        for _ in 0..MAX_ATTEMPTS {
            let anchor = PlanarPoint::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
            let b = self.make_box(anchor, rng, None)?;
            if box_distance_to_road(&b, &self.line) > 3.0 * r {
                return Ok(b);
            }
        }
        Err(SynthError::Placement("an off-road box"))
    }

    fn jittered(&self, truth: &GeoBox, rng: &mut ChaCha8Rng) -> Result<GeoBox, SynthError> {
        let j = self.params.jitter_m;
        let (dx, dy) = if j > 0.0 {
            (rng.random_range(-j..=j), rng.random_range(-j..=j))
        } else {
            (0.0, 0.0)
        };
        let origin = self.line.origin;
        let mut corners = [PlanarPoint::new(0.0, 0.0); 4];
        for (c, g) in corners.iter_mut().zip(&truth.corners) {
            let p = crate::geo::project_local(origin, *g)?;
            *c = PlanarPoint::new(p.x + dx, p.y + dy);
        }
        self.to_geo(corners, Some(self.params.tp_score))
    }
}

/// Truth boxes on and off the road plus predictions derived from them.
/// On-road truths have a corner within 0.9 of the filter radius; off-road
/// truths keep every corner beyond three radii.
pub fn gen_scene(road: &RoadPolyline, params: &SceneParams, seed: u64) -> Result<Scene, SynthError> {
    let mut rng = rng::substream(seed, &format!("synth/scene/{}", params.image_id));
    let placer = Placer {
        road,
        line: road.project(),
        params,
    };
    let mut truths = Vec::with_capacity(params.n_on + params.n_off);
    for _ in 0..params.n_on {
        truths.push(placer.on_road(&mut rng, None)?);
    }
    for _ in 0..params.n_off {
        truths.push(placer.off_road(&mut rng)?);
    }
    truths.shuffle(&mut rng);

    let mut predictions = Vec::new();
    for t in &truths {
        if params.miss_rate > 0.0 && rng.random::<f64>() < params.miss_rate {
            continue;
        }
        predictions.push(placer.jittered(t, &mut rng)?);
    }
    for _ in 0..params.n_false_positives {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let b = placer.on_road(&mut rng, Some(params.fp_score))?;
            let clear = truths
                .iter()
                .all(|t| iou(&b, t).map(|v| v < DEFAULT_IOU_MIN).unwrap_or(true));
            if clear {
                predictions.push(b);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SynthError::Placement("a false positive"));
        }
    }
    predictions.shuffle(&mut rng);
    Ok(Scene { predictions, truths })
}

/// Straight east-west road of `length_m` meters starting at `origin`.
pub fn straight_road(origin: GeoPoint, length_m: f64, radius_m: f64) -> Result<RoadPolyline, SynthError> {
    let end = unproject_local(origin, PlanarPoint::new(length_m, 0.0))?;
    Ok(RoadPolyline::new("synthetic", vec![origin, end], radius_m)?)
}
