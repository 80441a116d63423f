use std::io::Write;
use std::path::Path;

use super::{
    create, csv_records, invalid, open, parse_f64, parse_timestamp, write_err, Diagnostic, IoError,
    TIMESTAMP_FORMAT,
};
use crate::counts::{HourlyCount, MilepostTable, TollTrip};

pub const COUNT_HEADER: [&str; 5] = ["station_id", "region", "timestamp_iso8601", "count", "vehicle_class"];
pub const TOLL_HEADER: [&str; 4] = ["entry_plaza", "exit_plaza", "entry_time", "vehicle_class"];
pub const MILEPOST_HEADER: [&str; 2] = ["plaza", "milepost_miles"];

fn finish<T>(out: T, diags: Vec<Diagnostic>) -> Result<T, Vec<Diagnostic>> {
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(diags)
    }
}

pub(crate) fn parse_counts<R: std::io::Read>(reader: R) -> Result<Vec<HourlyCount>, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut out = Vec::new();
    for (line, rec) in csv_records(reader, &COUNT_HEADER, &mut diags) {
        let ts = match parse_timestamp(&rec[2]) {
            Ok(t) => Some(t),
            Err(m) => {
                diags.push(Diagnostic::new(Some(line), Some("timestamp_iso8601"), m));
                None
            }
        };
        let count = parse_f64(&rec, 3, "count", line, &mut diags);
        let (Some(ts), Some(count)) = (ts, count) else {
            continue;
        };
        match HourlyCount::new(&rec[0], &rec[1], ts, count) {
            Ok(c) => out.push(match &rec[4] {
                "" => c,
                class => c.with_class(class),
            }),
            Err(e) => diags.push(Diagnostic::new(Some(line), Some("count"), e.to_string())),
        }
    }
    finish(out, diags)
}

pub fn read_counts(path: &Path) -> Result<Vec<HourlyCount>, IoError> {
    parse_counts(open(path)?).map_err(|d| invalid(path, d))
}

pub(crate) fn format_counts<W: Write>(w: W, counts: &[HourlyCount]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(COUNT_HEADER)?;
    for c in counts {
        wtr.write_record([
            c.station_id.as_str(),
            c.region.as_str(),
            &c.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            &c.count.to_string(),
            c.vehicle_class.as_deref().unwrap_or(""),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_counts(path: &Path, counts: &[HourlyCount]) -> Result<(), IoError> {
    format_counts(create(path)?, counts).map_err(|e| write_err(path, e))
}

pub(crate) fn parse_trips<R: std::io::Read>(reader: R) -> Result<Vec<TollTrip>, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut out = Vec::new();
    for (line, rec) in csv_records(reader, &TOLL_HEADER, &mut diags) {
        let ts = match parse_timestamp(&rec[2]) {
            Ok(t) => t,
            Err(m) => {
                diags.push(Diagnostic::new(Some(line), Some("entry_time"), m));
                continue;
            }
        };
        match TollTrip::new(&rec[0], &rec[1], ts, &rec[3]) {
            Ok(t) => out.push(t),
            Err(e) => diags.push(Diagnostic::new(Some(line), Some("exit_plaza"), e.to_string())),
        }
    }
    finish(out, diags)
}

pub fn read_trips(path: &Path) -> Result<Vec<TollTrip>, IoError> {
    parse_trips(open(path)?).map_err(|d| invalid(path, d))
}

pub(crate) fn format_trips<W: Write>(w: W, trips: &[TollTrip]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TOLL_HEADER)?;
    for t in trips {
        wtr.write_record([
            t.entry_plaza.as_str(),
            t.exit_plaza.as_str(),
            &t.entry_time.format(TIMESTAMP_FORMAT).to_string(),
            t.vehicle_class.as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_trips(path: &Path, trips: &[TollTrip]) -> Result<(), IoError> {
    format_trips(create(path)?, trips).map_err(|e| write_err(path, e))
}

pub(crate) fn parse_mileposts<R: std::io::Read>(reader: R) -> Result<MilepostTable, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut table = MilepostTable::new();
    for (line, rec) in csv_records(reader, &MILEPOST_HEADER, &mut diags) {
        let Some(m) = parse_f64(&rec, 1, "milepost_miles", line, &mut diags) else {
            continue;
        };
        if table.insert(rec[0].to_string(), m).is_some() {
            diags.push(Diagnostic::new(Some(line), Some("plaza"), format!("duplicate plaza `{}`", &rec[0])));
        }
    }
    finish(table, diags)
}

pub fn read_mileposts(path: &Path) -> Result<MilepostTable, IoError> {
    parse_mileposts(open(path)?).map_err(|d| invalid(path, d))
}
