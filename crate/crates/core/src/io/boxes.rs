use std::io::Write;
use std::path::Path;

use super::{create, csv_records, invalid, open, parse_f64, write_err, Diagnostic, IoError};
use crate::geo::{GeoBox, GeoPoint};

pub const BOX_HEADER: [&str; 11] = [
    "image_id", "class", "score", "lon1", "lat1", "lon2", "lat2", "lon3", "lat3", "lon4", "lat4",
];

pub(crate) fn parse_boxes<R: std::io::Read>(reader: R) -> Result<Vec<GeoBox>, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut boxes = Vec::new();
    for (line, rec) in csv_records(reader, &BOX_HEADER, &mut diags) {
        let n_before = diags.len();
        let score = match &rec[2] {
            "" => None,
            _ => parse_f64(&rec, 2, "score", line, &mut diags),
        };
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) {
                diags.push(Diagnostic::new(Some(line), Some("score"), format!("{s} outside [0, 1]")));
            }
        }
        let mut corners = Vec::with_capacity(4);
        for i in 0..4 {
            let lon_name = BOX_HEADER[3 + 2 * i];
            let lat_name = BOX_HEADER[4 + 2 * i];
            let lon = parse_f64(&rec, 3 + 2 * i, lon_name, line, &mut diags);
            let lat = parse_f64(&rec, 4 + 2 * i, lat_name, line, &mut diags);
            if let (Some(lon), Some(lat)) = (lon, lat) {
                match GeoPoint::new(lon, lat) {
                    Ok(p) => corners.push(p),
                    Err(e) => diags.push(Diagnostic::new(Some(line), Some(lon_name), e.to_string())),
                }
            }
        }
        if rec[0].is_empty() {
            diags.push(Diagnostic::new(Some(line), Some("image_id"), "empty image id"));
        }
        if diags.len() > n_before {
            continue;
        }
        let corners: [GeoPoint; 4] = corners.try_into().expect("four validated corners");
        match GeoBox::new(&rec[0], &rec[1], score, corners) {
            Ok(b) => boxes.push(b),
            Err(e) => diags.push(Diagnostic::new(Some(line), None, e.to_string())),
        }
    }
    if diags.is_empty() {
        Ok(boxes)
    } else {
        Err(diags)
    }
}

pub fn read_boxes(path: &Path) -> Result<Vec<GeoBox>, IoError> {
    parse_boxes(open(path)?).map_err(|d| invalid(path, d))
}

pub(crate) fn format_boxes<W: Write>(w: W, boxes: &[GeoBox]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(BOX_HEADER)?;
    for b in boxes {
        let mut row = vec![
            b.image_id.clone(),
            b.class_label.clone(),
            b.score.map(|s| s.to_string()).unwrap_or_default(),
        ];
        for c in &b.corners {
            row.push(c.lon.to_string());
            row.push(c.lat.to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_boxes(path: &Path, boxes: &[GeoBox]) -> Result<(), IoError> {
    format_boxes(create(path)?, boxes).map_err(|e| write_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<GeoBox> {
        let p = |lon, lat| GeoPoint::new(lon, lat).unwrap();
        vec![
            GeoBox::new("img1", "truck", Some(0.875), [p(-73.1, 42.1), p(-73.0999, 42.1), p(-73.0999, 42.1001), p(-73.1, 42.1001)]).unwrap(),
            GeoBox::new("img1", "truck", None, [p(0.1, 0.2), p(0.3, 0.2), p(0.3, 0.4), p(0.1, 0.4)]).unwrap(),
        ]
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        format_boxes(&mut buf, &sample()).unwrap();
        assert_eq!(parse_boxes(buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn three_corners_names_row_and_column() {
        let csv = "image_id,class,score,lon1,lat1,lon2,lat2,lon3,lat3,lon4,lat4\n\
                   a,truck,0.5,0,0,1,0,1,1,0,1\n\
                   b,truck,0.5,0,0,1,0,1,1\n";
        let d = parse_boxes(csv.as_bytes()).unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, Some(3));
        assert_eq!(d[0].column.as_deref(), Some("lon4"));
    }

    #[test]
    fn bad_values_are_reported() {
        let csv = "image_id,class,score,lon1,lat1,lon2,lat2,lon3,lat3,lon4,lat4\n\
                   a,truck,1.5,0,0,1,0,1,1,0,1\n\
                   b,truck,,0,95,1,0,1,1,0,x\n";
        let d = parse_boxes(csv.as_bytes()).unwrap_err();
        let cols: Vec<_> = d.iter().map(|x| x.column.clone().unwrap_or_default()).collect();
        assert!(cols.contains(&"score".to_string()));
        assert!(cols.contains(&"lat4".to_string()));
        assert!(cols.contains(&"lon1".to_string()));
        let bad_header = "id,class\nx,y\n";
        assert_eq!(parse_boxes(bad_header.as_bytes()).unwrap_err()[0].line, Some(1));
    }
}
