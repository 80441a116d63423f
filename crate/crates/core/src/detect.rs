//! Detector evaluation: IoU matching, pooled precision/recall, the weighted
//! count error, and selection of the detection probability threshold.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::geo::{project_local, road_filter, GeoBox, GeoPoint, RoadPolyline};

/// A prediction counts as detected at IoU at or above this value.
pub const DEFAULT_IOU_MIN: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("degenerate box with zero area in image `{image_id}`")]
    DegenerateBox { image_id: String },
    #[error("prediction {index} in image `{image_id}` has no score")]
    MissingScore { image_id: String, index: usize },
    #[error("count error undefined: total true count is zero")]
    UndefinedDenominator,
    #[error("relative error undefined for images with zero true trucks: {}", .0.join(", "))]
    ZeroTruthImages(Vec<String>),
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
}

/// Axis-aligned rectangle in a local planar frame, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    /// Bounding rectangle of the box corners projected about `origin`.
    pub fn from_box(b: &GeoBox, origin: GeoPoint) -> Rect {
        let mut r = Rect::new(
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        );
        for c in &b.corners {
            let p = project_local(origin, *c).expect("box corners validated on construction");
            r.min_x = r.min_x.min(p.x);
            r.min_y = r.min_y.min(p.y);
            r.max_x = r.max_x.max(p.x);
            r.max_y = r.max_y.max(p.y);
        }
        r
    }

    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x).max(0.0) * (self.max_y - self.min_y).max(0.0)
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let w = self.max_x.min(other.max_x) - self.min_x.max(other.min_x);
        let h = self.max_y.min(other.max_y) - self.min_y.max(other.min_y);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Returns `None` when either rectangle has zero area.
    pub fn iou(&self, other: &Rect) -> Option<f64> {
        let (a, b) = (self.area(), other.area());
        if a <= 0.0 || b <= 0.0 {
            return None;
        }
        let inter = self.intersection_area(other);
        Some(inter / (a + b - inter))
    }
}

/// Intersection over union of the axis-aligned hulls of two boxes, computed
/// in a local frame centered between their first corners.
pub fn iou(a: &GeoBox, b: &GeoBox) -> Result<f64, EvalError> {
    let origin = GeoPoint {
        lon: 0.5 * (a.corners[0].lon + b.corners[0].lon),
        lat: 0.5 * (a.corners[0].lat + b.corners[0].lat),
    };
    let ra = Rect::from_box(a, origin);
    let rb = Rect::from_box(b, origin);
    ra.iou(&rb).ok_or_else(|| EvalError::DegenerateBox {
        image_id: if ra.area() <= 0.0 {
            a.image_id.clone()
        } else {
            b.image_id.clone()
        },
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `(prediction index, truth index, IoU)` in the order matches were made.
    pub matched_pairs: Vec<(usize, usize, f64)>,
}

/// Prediction indices by descending score; equal scores keep input order.
pub fn score_order(preds: &[GeoBox]) -> Result<Vec<usize>, EvalError> {
    let mut scores = Vec::with_capacity(preds.len());
    for (index, p) in preds.iter().enumerate() {
        match p.score {
            Some(s) => scores.push(s),
            None => {
                return Err(EvalError::MissingScore {
                    image_id: p.image_id.clone(),
                    index,
                })
            }
        }
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    Ok(order)
}

/// Greedy matching: predictions in descending score order each claim the
/// unclaimed truth with the highest IoU at or above `iou_min`.
///
/// Boxes are assumed to come from one image.
pub fn match_detections(
    preds: &[GeoBox],
    truths: &[GeoBox],
    iou_min: f64,
) -> Result<MatchResult, EvalError> {
    let order = score_order(preds)?;
    let mut claimed = vec![false; truths.len()];
    let mut matched_pairs = Vec::new();
    for &pi in &order {
        let mut best: Option<(usize, f64)> = None;
        for (ti, truth) in truths.iter().enumerate() {
            if claimed[ti] {
                continue;
            }
            let v = iou(&preds[pi], truth)?;
            if v >= iou_min && best.is_none_or(|(_, b)| v > b) {
                best = Some((ti, v));
            }
        }
        if let Some((ti, v)) = best {
            claimed[ti] = true;
            matched_pairs.push((pi, ti, v));
        }
    }
    let tp = matched_pairs.len();
    Ok(MatchResult {
        true_positives: tp,
        false_positives: preds.len() - tp,
        false_negatives: truths.len() - tp,
        matched_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageCountPair {
    pub image_id: String,
    pub c_pred: u64,
    pub c_true: u64,
}

impl ImageCountPair {
    pub fn new(image_id: impl Into<String>, c_pred: u64, c_true: u64) -> Self {
        ImageCountPair {
            image_id: image_id.into(),
            c_pred,
            c_true,
        }
    }
}

/// Total absolute count error divided by the total true count.
pub fn count_error(pairs: &[ImageCountPair]) -> Result<f64, EvalError> {
    let total_true: u64 = pairs.iter().map(|p| p.c_true).sum();
    if total_true == 0 {
        return Err(EvalError::UndefinedDenominator);
    }
    let abs_err: u64 = pairs.iter().map(|p| p.c_pred.abs_diff(p.c_true)).sum();
    Ok(abs_err as f64 / total_true as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    /// `(image_id, (c_pred - c_true) / c_true)`; negative means underprediction.
    pub per_image: Vec<(String, f64)>,
    pub mean: f64,
}

pub fn per_image_bias(pairs: &[ImageCountPair]) -> Result<BiasReport, EvalError> {
    let zero: Vec<String> = pairs
        .iter()
        .filter(|p| p.c_true == 0)
        .map(|p| p.image_id.clone())
        .collect();
    if !zero.is_empty() {
        return Err(EvalError::ZeroTruthImages(zero));
    }
    if pairs.is_empty() {
        return Err(EvalError::UndefinedDenominator);
    }
    let per_image: Vec<(String, f64)> = pairs
        .iter()
        .map(|p| {
            let rel = (p.c_pred as f64 - p.c_true as f64) / p.c_true as f64;
            (p.image_id.clone(), rel)
        })
        .collect();
    let mean = per_image.iter().map(|(_, r)| r).sum::<f64>() / per_image.len() as f64;
    Ok(BiasReport { per_image, mean })
}

/// Pooled precision with the vacuous value 1 when nothing was predicted.
pub fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// Pooled recall with the vacuous value 1 when there is nothing to find.
pub fn recall(tp: usize, fn_: usize) -> f64 {
    if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub count_error: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub points: Vec<SweepPoint>,
    pub optimum: SweepPoint,
}

impl ThresholdSweep {
    pub fn thresholds(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.threshold)
    }
}

/// 0.000, 0.005, ..., 1.000.
pub fn default_grid() -> Vec<f64> {
    (0..=200).map(|i| i as f64 / 200.0).collect()
}

/// Per-image matching outcome over the full prediction list, reusable at
/// every threshold: greedy matching of the predictions with score ≥ t is the
/// prefix of the full greedy run in score order.
#[derive(Debug, Clone)]
struct ImageMatch {
    image_id: String,
    n_truth: usize,
    /// `(score, matched)` for each prediction, in processing order.
    ranked: Vec<(f64, bool)>,
}

impl ImageMatch {
    fn build(
        image_id: &str,
        preds: &[GeoBox],
        truths: &[GeoBox],
        iou_min: f64,
    ) -> Result<Self, EvalError> {
        let result = match_detections(preds, truths, iou_min)?;
        let matched: BTreeSet<usize> = result.matched_pairs.iter().map(|m| m.0).collect();
        let ranked = score_order(preds)?
            .into_iter()
            .map(|i| (preds[i].score.unwrap_or(0.0), matched.contains(&i)))
            .collect();
        Ok(ImageMatch {
            image_id: image_id.to_string(),
            n_truth: truths.len(),
            ranked,
        })
    }

    fn at(&self, threshold: f64) -> (usize, usize) {
        let kept = self.ranked.iter().take_while(|(s, _)| *s >= threshold);
        let (mut tp, mut n) = (0, 0);
        for (_, m) in kept {
            n += 1;
            tp += usize::from(*m);
        }
        (tp, n)
    }
}

fn group_by_image(boxes: Vec<GeoBox>) -> BTreeMap<String, Vec<GeoBox>> {
    let mut out: BTreeMap<String, Vec<GeoBox>> = BTreeMap::new();
    for b in boxes {
        out.entry(b.image_id.clone()).or_default().push(b);
    }
    out
}

/// Evaluation of one detector setting over all images, pooled.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub point: SweepPoint,
    pub pairs: Vec<ImageCountPair>,
}

struct Evaluator {
    images: Vec<ImageMatch>,
}

impl Evaluator {
    fn new(
        preds: &[GeoBox],
        truths: &[GeoBox],
        road: Option<&RoadPolyline>,
        iou_min: f64,
    ) -> Result<Self, EvalError> {
        let (preds, truths) = match road {
            Some(r) => (road_filter(preds, r), road_filter(truths, r)),
            None => (preds.to_vec(), truths.to_vec()),
        };
        let mut by_pred = group_by_image(preds);
        let mut by_truth = group_by_image(truths);
        let ids: BTreeSet<String> = by_pred.keys().chain(by_truth.keys()).cloned().collect();
        let mut images = Vec::with_capacity(ids.len());
        for id in ids {
            let p = by_pred.remove(&id).unwrap_or_default();
            let t = by_truth.remove(&id).unwrap_or_default();
            images.push(ImageMatch::build(&id, &p, &t, iou_min)?);
        }
        Ok(Evaluator { images })
    }

    fn evaluate(&self, threshold: f64) -> Result<Evaluation, EvalError> {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        let mut pairs = Vec::with_capacity(self.images.len());
        for img in &self.images {
            let (t, n) = img.at(threshold);
            tp += t;
            fp += n - t;
            fn_ += img.n_truth - t;
            pairs.push(ImageCountPair::new(&img.image_id, n as u64, img.n_truth as u64));
        }
        let point = SweepPoint {
            threshold,
            count_error: count_error(&pairs)?,
            precision: precision(tp, fp),
            recall: recall(tp, fn_),
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        };
        Ok(Evaluation { point, pairs })
    }
}

/// Scores the predictions kept at `threshold` against the truths, optionally
/// road-filtering both sides first.
pub fn evaluate_at(
    preds: &[GeoBox],
    truths: &[GeoBox],
    road: Option<&RoadPolyline>,
    threshold: f64,
    iou_min: f64,
) -> Result<Evaluation, EvalError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(EvalError::InvalidThreshold(threshold));
    }
    Evaluator::new(preds, truths, road, iou_min)?.evaluate(threshold)
}

/// Sweeps the detection threshold over `grid` and picks the one minimizing the
/// count error; ties go to the largest threshold.
pub fn tune_threshold(
    preds: &[GeoBox],
    truths: &[GeoBox],
    road: Option<&RoadPolyline>,
    grid: &[f64],
    iou_min: f64,
) -> Result<ThresholdSweep, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if let Some(bad) = grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(EvalError::InvalidThreshold(*bad));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let evaluator = Evaluator::new(preds, truths, road, iou_min)?;
    let points = grid
        .iter()
        .map(|&t| evaluator.evaluate(t).map(|e| e.point))
        .collect::<Result<Vec<_>, _>>()?;
    let optimum = points
        .iter()
        .fold(None::<&SweepPoint>, |best, p| match best {
            Some(b) if p.count_error > b.count_error => Some(b),
            _ => Some(p),
        })
        .expect("grid is non-empty")
        .clone();
    Ok(ThresholdSweep { points, optimum })
}
