use std::path::Path;
use std::process::{Command, Output};

use aadtt::io::{read_boxes, read_counts, read_model, read_roads};

fn aadtt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aadtt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = aadtt(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(aadtt(dir.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(aadtt(dir.path(), &["aadtt", "--counts", "x.csv", "--method", "median"]).status.code(), Some(1));
    assert_eq!(aadtt(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(aadtt(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn synthetic_outputs_round_trip_through_parsers() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "hourly", "--region", "NY", "--stations", "2", "--schedule", "first-days:3", "--out", "c.csv"]);
    ok(d, &["synth", "scene", "--pred-out", "p.csv", "--truth-out", "t.csv", "--roads-out", "r.geojson"]);
    ok(d, &["train-factors", "--counts", "c.csv", "--spec", "linear-3", "--out", "m.json"]);

    let counts = read_counts(&d.join("c.csv")).unwrap();
    assert_eq!(counts.len(), 2 * 12 * 3 * 24);
    assert_eq!(read_boxes(&d.join("t.csv")).unwrap().len(), 20);
    assert_eq!(read_roads(&d.join("r.geojson"), 8.0).unwrap().len(), 1);
    assert!(read_model(&d.join("m.json")).is_ok());

    let report = ok(
        d,
        &["validate", "--counts", "c.csv", "--boxes", "p.csv", "--boxes", "t.csv", "--roads", "r.geojson", "--model", "m.json"],
    );
    assert_eq!(report.lines().filter(|l| l.contains(": ok")).count(), 5, "{report}");
}

#[test]
fn validate_reports_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("b.csv"),
        "image_id,class,score,lon1,lat1,lon2,lat2,lon3,lat3,lon4,lat4\n\
         img,Truck,0.9,-73.0,42.0,-73.0001,42.0,-73.0001,42.0001,-73.0,42.0001\n\
         img,Truck,0.9,-73.0,42.0,-73.0001,42.0,-73.0001,42.0001\n",
    )
    .unwrap();
    std::fs::write(
        d.join("c.csv"),
        "station_id,region,timestamp_iso8601,count,vehicle_class\ns,NY,2017-01-01T24:00:00,3,\n",
    )
    .unwrap();
    let out = aadtt(d, &["validate", "--boxes", "b.csv", "--counts", "c.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("line 3, column `lon4`"), "{text}");
    assert!(text.contains("hour 24 out of range"), "{text}");
}

#[test]
fn missing_model_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "scene", "--pred-out", "p.csv", "--truth-out", "t.csv", "--roads-out", "r.geojson"]);
    let out = aadtt(
        d,
        &[
            "estimate", "--boxes", "p.csv", "--road", "r.geojson", "--model", "nope.json", "--timestamp",
            "2017-06-14T15:00", "--section-length", "0.5km", "--region", "BR",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.json"), "{}", stderr(&out));
}

#[test]
fn zero_on_road_trucks_give_zero_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "hourly", "--region", "NY", "--stations", "1", "--out", "c.csv"]);
    ok(d, &["train-factors", "--counts", "c.csv", "--spec", "linear-4", "--out", "m.json"]);
    ok(
        d,
        &["synth", "scene", "--n-on", "0", "--n-off", "6", "--pred-out", "p.csv", "--truth-out", "t.csv", "--roads-out", "r.geojson"],
    );
    let out = aadtt(
        d,
        &[
            "estimate", "--boxes", "p.csv", "--road", "r.geojson", "--model", "m.json", "--timestamp",
            "2017-06-14T15:00", "--section-length", "0.5km", "--region", "BR", "--out", "e.csv",
            "--report", "report.txt",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("median 0.0 q25 0.0 q75 0.0 c_I 0"), "{stdout}");
    assert!(stderr(&out).contains("WARN"), "{}", stderr(&out));
    let report = std::fs::read_to_string(d.join("report.txt")).unwrap();
    assert!(report.contains("boxes read       6"), "{report}");
    assert!(report.contains("on road          0"), "{report}");
    assert!(report.contains("warning"), "{report}");

    let mut rdr = csv::Reader::from_path(d.join("e.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let field = |name: &str| row[header.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(field("boxes_in"), "6");
    assert_eq!(field("after_road"), "0");
    assert_eq!(field("median"), "0");
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "hourly", "--region", "NY", "--stations", "1", "--out", "c.csv"]);
    ok(d, &["train-factors", "--counts", "c.csv", "--spec", "linear-4", "--out", "m.json"]);
    ok(d, &["synth", "scene", "--n-on", "5", "--pred-out", "p.csv", "--truth-out", "t.csv", "--roads-out", "r.geojson"]);
    std::fs::write(
        d.join("run.toml"),
        "roads = \"r.geojson\"\nmodel = \"m.json\"\nthreshold = 0.95\nsamples = 500\nseed = 4\n[speeds]\nBR = \"80km/h\"\n",
    )
    .unwrap();
    let base = [
        "estimate", "--config", "run.toml", "--boxes", "p.csv", "--timestamp", "2017-06-14T15:00",
        "--section-length", "0.5km", "--region", "BR",
    ];
    // Scores are 0.9, so the configured threshold drops every box.
    let none = ok(d, &base);
    assert!(none.contains("c_I 0"), "{none}");
    let mut args = base.to_vec();
    args.extend(["--threshold", "0.5"]);
    let five = ok(d, &args);
    assert!(five.contains("c_I 5"), "{five}");
}

#[test]
fn toll_ingest_and_aadtt() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("mp.csv"), "plaza,milepost_miles\nP1,0\nP2,10\nP3,20\n").unwrap();
    std::fs::write(
        d.join("trips.csv"),
        "entry_plaza,exit_plaza,entry_time,vehicle_class\n\
         P1,P3,2016-05-03T10:00:00,H3\n\
         P3,P1,2016-05-03T10:10:00,H5\n\
         P1,P2,2016-05-03T10:20:00,H3\n\
         P1,P3,2016-05-03T12:00:00,L2\n",
    )
    .unwrap();
    let msg = ok(
        d,
        &["ingest-toll", "--trips", "trips.csv", "--mileposts", "mp.csv", "--section", "P2,P3", "--speed-mph", "60", "--out", "s.csv"],
    );
    assert!(msg.contains("2 of 3 truck trips"), "{msg}");
    let counts = read_counts(&d.join("s.csv")).unwrap();
    assert_eq!(counts.iter().map(|c| c.count).sum::<f64>(), 2.0);

    let csv = ok(d, &["aadtt", "--counts", "s.csv", "--method", "simple"]);
    let line = csv.lines().nth(1).unwrap();
    assert!(line.starts_with("P2-P3,NY,2016,simple,"), "{csv}");
}

#[test]
fn threshold_sweep_output_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["synth", "scene", "--false-positives", "2", "--pred-out", "p.csv", "--truth-out", "t.csv", "--roads-out", "r.geojson"],
    );
    let summary = ok(d, &["tune-threshold", "--pred", "p.csv", "--truth", "t.csv", "--roads", "r.geojson", "--out", "s.csv"]);
    assert!(summary.starts_with("optimum threshold 0.9 count_error 0"), "{summary}");
    let sweep = std::fs::read_to_string(d.join("s.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 202);
    assert!(sweep.starts_with("threshold,count_error,precision,recall"));

    let eval = ok(d, &["eval-detect", "--pred", "p.csv", "--truth", "t.csv", "--threshold", "0.05"]);
    let row: Vec<&str> = eval.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[5], "2", "{eval}");
}
