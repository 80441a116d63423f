use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject, Value};

use super::{create, invalid, read_to_string, write_err, Diagnostic, IoError};
use crate::geo::{GeoPoint, RoadPolyline};

/// Parses a FeatureCollection of LineStrings. Diagnostics use the feature
/// index (1-based) in place of a line number.
pub(crate) fn parse_roads(text: &str, default_radius_m: f64) -> Result<Vec<RoadPolyline>, Vec<Diagnostic>> {
    let fc = match GeoJson::from_str(text) {
        Ok(GeoJson::FeatureCollection(fc)) => fc,
        Ok(_) => return Err(vec![Diagnostic::new(None, None, "expected a FeatureCollection")]),
        Err(e) => return Err(vec![Diagnostic::new(None, None, format!("invalid GeoJSON: {e}"))]),
    };
    let mut diags = Vec::new();
    let mut roads = Vec::new();
    for (i, f) in fc.features.iter().enumerate() {
        let idx = Some(i as u64 + 1);
        let road_id = match f.property("road_id") {
            Some(serde_json::Value::String(s)) if !s.is_empty() => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => {
                diags.push(Diagnostic::new(idx, Some("road_id"), "missing or empty road_id property"));
                continue;
            }
        };
        let radius = match f.property("filter_radius_m") {
            None | Some(serde_json::Value::Null) => default_radius_m,
            Some(v) => match v.as_f64() {
                Some(r) => r,
                None => {
                    diags.push(Diagnostic::new(idx, Some("filter_radius_m"), "filter_radius_m must be a number"));
                    continue;
                }
            },
        };
        let coords = match f.geometry.as_ref().map(|g| &g.value) {
            Some(Value::LineString(c)) => c,
            _ => {
                diags.push(Diagnostic::new(idx, Some("geometry"), format!("road `{road_id}` is not a LineString")));
                continue;
            }
        };
        let mut vertices = Vec::with_capacity(coords.len());
        let mut bad = false;
        for (j, c) in coords.iter().enumerate() {
            if c.len() < 2 {
                diags.push(Diagnostic::new(idx, Some("geometry"), format!("vertex {} has fewer than 2 coordinates", j + 1)));
                bad = true;
                continue;
            }
            match GeoPoint::new(c[0], c[1]) {
                Ok(p) => vertices.push(p),
                Err(e) => {
                    diags.push(Diagnostic::new(idx, Some("geometry"), format!("vertex {}: {e}", j + 1)));
                    bad = true;
                }
            }
        }
        if bad {
            continue;
        }
        match RoadPolyline::new(road_id, vertices, radius) {
            Ok(r) => roads.push(r),
            Err(e) => diags.push(Diagnostic::new(idx, None, e.to_string())),
        }
    }
    if fc.features.is_empty() {
        diags.push(Diagnostic::new(None, None, "no road features"));
    }
    if diags.is_empty() {
        Ok(roads)
    } else {
        Err(diags)
    }
}

pub fn read_roads(path: &Path, default_radius_m: f64) -> Result<Vec<RoadPolyline>, IoError> {
    parse_roads(&read_to_string(path)?, default_radius_m).map_err(|d| invalid(path, d))
}

pub fn roads_to_geojson(roads: &[RoadPolyline]) -> String {
    let features = roads
        .iter()
        .map(|r| {
            let mut props = JsonObject::new();
            props.insert("road_id".into(), r.road_id().into());
            props.insert("filter_radius_m".into(), r.filter_radius_m().into());
            let line = r.vertices().iter().map(|v| vec![v.lon, v.lat]).collect();
            Feature {
                bbox: None,
                geometry: Some(Geometry::new(Value::LineString(line))),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    GeoJson::FeatureCollection(FeatureCollection {
        bbox: None,
        features,
        foreign_members: None,
    })
    .to_string()
}

pub fn write_roads(path: &Path, roads: &[RoadPolyline]) -> Result<(), IoError> {
    let mut w = create(path)?;
    writeln!(w, "{}", roads_to_geojson(roads))
        .and_then(|_| w.flush())
        .map_err(|e| write_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_default_radius() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"road_id":"I-90"},
             "geometry":{"type":"LineString","coordinates":[[-73.8,42.6],[-73.7,42.65]]}},
            {"type":"Feature","properties":{"road_id":"BR-116","filter_radius_m":40},
             "geometry":{"type":"LineString","coordinates":[[-46.6,-23.5],[-46.5,-23.4],[-46.5,-23.4]]}}
        ]}"#;
        let roads = parse_roads(text, 8.0).unwrap();
        assert_eq!(roads[0].filter_radius_m(), 8.0);
        assert_eq!(roads[1].filter_radius_m(), 40.0);
        assert_eq!(roads[1].vertices().len(), 2);
        let back = parse_roads(&roads_to_geojson(&roads), 1.0).unwrap();
        assert_eq!(back, roads);
    }

    #[test]
    fn problems_name_the_feature() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},
             "geometry":{"type":"LineString","coordinates":[[0,0],[1,1]]}},
            {"type":"Feature","properties":{"road_id":"p"},
             "geometry":{"type":"Point","coordinates":[0,0]}},
            {"type":"Feature","properties":{"road_id":"short"},
             "geometry":{"type":"LineString","coordinates":[[0,0],[0,0]]}}
        ]}"#;
        let d = parse_roads(text, 8.0).unwrap_err();
        assert_eq!(d.iter().map(|x| x.line).collect::<Vec<_>>(), vec![Some(1), Some(2), Some(3)]);
        assert!(parse_roads("{}", 8.0).is_err());
    }
}
