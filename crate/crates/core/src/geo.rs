//! Coordinates, local planar projection, and the road filter.
//!
//! Highway scenes span a few kilometers, so every geometric test here runs in
//! a local equirectangular frame anchored at the first vertex of the road.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the local projection, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Filter radius used when both carriageways are mapped by one centerline.
pub const DEFAULT_FILTER_RADIUS_M: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid coordinate: lon={lon}, lat={lat}")]
    InvalidCoordinate { lon: f64, lat: f64 },
    #[error("invalid score {0}: must lie in [0, 1]")]
    InvalidScore(f64),
    #[error("road `{road_id}` needs at least two distinct vertices, got {count}")]
    TooFewVertices { road_id: String, count: usize },
    #[error("road `{road_id}` has non-positive filter radius {radius}")]
    InvalidRadius { road_id: String, radius: f64 },
}

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        let p = GeoPoint { lon, lat };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let ok = self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat);
        if ok {
            Ok(())
        } else {
            Err(GeoError::InvalidCoordinate {
                lon: self.lon,
                lat: self.lat,
            })
        }
    }
}

/// Meters east (`x`) and north (`y`) of a projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Equirectangular projection of `p` about `origin`.
pub fn project_local(origin: GeoPoint, p: GeoPoint) -> Result<PlanarPoint, GeoError> {
    origin.validate()?;
    p.validate()?;
    let deg = std::f64::consts::PI / 180.0;
    let x = (p.lon - origin.lon) * deg * EARTH_RADIUS_M * (origin.lat * deg).cos();
    let y = (p.lat - origin.lat) * deg * EARTH_RADIUS_M;
    Ok(PlanarPoint { x, y })
}

/// Inverse of [`project_local`].
pub fn unproject_local(origin: GeoPoint, p: PlanarPoint) -> Result<GeoPoint, GeoError> {
    origin.validate()?;
    let deg = std::f64::consts::PI / 180.0;
    let lat = origin.lat + p.y / (EARTH_RADIUS_M * deg);
    let lon = origin.lon + p.x / (EARTH_RADIUS_M * deg * (origin.lat * deg).cos());
    GeoPoint::new(lon, lat)
}

/// A detector output or annotation: four georeferenced corners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub image_id: String,
    pub class_label: String,
    pub score: Option<f64>,
    pub corners: [GeoPoint; 4],
}

impl GeoBox {
    pub fn new(
        image_id: impl Into<String>,
        class_label: impl Into<String>,
        score: Option<f64>,
        corners: [GeoPoint; 4],
    ) -> Result<Self, GeoError> {
        for c in &corners {
            c.validate()?;
        }
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) {
                return Err(GeoError::InvalidScore(s));
            }
        }
        Ok(GeoBox {
            image_id: image_id.into(),
            class_label: class_label.into(),
            score,
            corners,
        })
    }
}

/// A highway centerline with the corridor half-width used by the road filter.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadPolyline {
    road_id: String,
    vertices: Vec<GeoPoint>,
    filter_radius_m: f64,
}

impl RoadPolyline {
    /// Consecutive duplicate vertices are dropped; at least two distinct
    /// vertices must remain.
    pub fn new(
        road_id: impl Into<String>,
        vertices: Vec<GeoPoint>,
        filter_radius_m: f64,
    ) -> Result<Self, GeoError> {
        let road_id = road_id.into();
        for v in &vertices {
            v.validate()?;
        }
        if !(filter_radius_m.is_finite() && filter_radius_m > 0.0) {
            return Err(GeoError::InvalidRadius {
                road_id,
                radius: filter_radius_m,
            });
        }
        let mut deduped: Vec<GeoPoint> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if deduped.last() != Some(&v) {
                deduped.push(v);
            }
        }
        if deduped.len() < 2 {
            return Err(GeoError::TooFewVertices {
                road_id,
                count: deduped.len(),
            });
        }
        Ok(RoadPolyline {
            road_id,
            vertices: deduped,
            filter_radius_m,
        })
    }

    pub fn road_id(&self) -> &str {
        &self.road_id
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn filter_radius_m(&self) -> f64 {
        self.filter_radius_m
    }

    pub fn with_radius(&self, filter_radius_m: f64) -> Result<Self, GeoError> {
        RoadPolyline::new(self.road_id.clone(), self.vertices.clone(), filter_radius_m)
    }

    pub fn reversed(&self) -> Self {
        let mut r = self.clone();
        r.vertices.reverse();
        r
    }

    /// The projection origin shared by everything measured against this road.
    pub fn origin(&self) -> GeoPoint {
        self.vertices[0]
    }

    pub fn project(&self) -> ProjectedPolyline {
        let origin = self.origin();
        let points = self
            .vertices
            .iter()
            .map(|v| project_local(origin, *v).expect("vertices validated on construction"))
            .collect();
        ProjectedPolyline { origin, points }
    }
}

/// A road centerline in the local frame of its first vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPolyline {
    pub origin: GeoPoint,
    pub points: Vec<PlanarPoint>,
}

impl ProjectedPolyline {
    pub fn segments(&self) -> impl Iterator<Item = (PlanarPoint, PlanarPoint)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    /// Total length in meters.
    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(&b)).sum()
    }

    /// Point at arc length `t` meters from the first vertex, with the unit
    /// direction of the segment it falls on.
    pub fn point_at(&self, t: f64) -> (PlanarPoint, PlanarPoint) {
        let mut remaining = t.max(0.0);
        let mut last = None;
        for (a, b) in self.segments() {
            let len = a.distance(&b);
            if len == 0.0 {
                continue;
            }
            let dir = PlanarPoint::new((b.x - a.x) / len, (b.y - a.y) / len);
            if remaining <= len {
                return (
                    PlanarPoint::new(a.x + dir.x * remaining, a.y + dir.y * remaining),
                    dir,
                );
            }
            remaining -= len;
            last = Some((b, dir));
        }
        last.expect("polyline has at least one non-degenerate segment")
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub fn dist_point_segment(p: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(&a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&PlanarPoint::new(a.x + t * dx, a.y + t * dy))
}

/// Minimum distance from `p` to any non-degenerate segment of `line`.
pub fn dist_point_polyline(p: PlanarPoint, line: &ProjectedPolyline) -> f64 {
    let mut best = f64::INFINITY;
    for (a, b) in line.segments() {
        if a == b {
            continue;
        }
        best = best.min(dist_point_segment(p, a, b));
    }
    best
}

/// Distance in meters from the nearest corner of `b` to the road centerline.
pub fn box_distance_to_road(b: &GeoBox, line: &ProjectedPolyline) -> f64 {
    b.corners
        .iter()
        .map(|c| {
            let p = project_local(line.origin, *c).expect("box corners validated on construction");
            dist_point_polyline(p, line)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Keeps the boxes with at least one corner within the road's filter radius
/// (inclusive). Input order is preserved.
pub fn road_filter(boxes: &[GeoBox], road: &RoadPolyline) -> Vec<GeoBox> {
    let line = road.project();
    let radius = road.filter_radius_m();
    boxes
        .iter()
        .filter(|b| box_distance_to_road(b, &line) <= radius)
        .cloned()
        .collect()
}
