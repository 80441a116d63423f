mod common;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aadtt::error::Error;
use aadtt::estimate::{Length, LengthUnit, SpeedModel};
use aadtt::factors::{fit_factor_model, mean_absolute_error, FitOptions, ModelSpec};
use aadtt::geo::GeoPoint;
use aadtt::io::{write_boxes, write_model, write_roads};
use aadtt::pipeline::{run_pipeline, PipelineConfig, Section};
use aadtt::synth::{gen_scene, gen_snapshot, straight_road, year_hours, FactorSurface, Noise, SceneParams, TrafficWorld};

fn world(aadtt: f64, seed: u64) -> TrafficWorld {
    TrafficWorld::new(aadtt, 2017, FactorSurface::default(), Noise::Poisson, seed).unwrap()
}

#[test]
fn synthetic_scenes_recover_world_aadtt() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let w = world(2400.0, 1);
    let mut rows = Vec::new();
    for r in ["NY", "CA"] {
        rows.extend(common::factor_rows(&common::region_counts(&w, r, 3, 2)));
    }
    let model = fit_factor_model(ModelSpec::DowHourInteraction, &rows, &[], &FitOptions::default()).unwrap();
    write_model(&d.join("model.json"), &model).unwrap();

    // 9 km at 90 km/h: a truck spends a tenth of an hour on the section.
    let length = Length::km(9.0);
    let speed = SpeedModel::new(90.0, LengthUnit::Km).unwrap();
    let road = straight_road(GeoPoint::new(4.35, 50.85).unwrap(), 9000.0, 8.0).unwrap();
    write_roads(&d.join("road.geojson"), std::slice::from_ref(&road)).unwrap();
    let config = PipelineConfig {
        roads: Some(d.join("road.geojson")),
        model: Some(d.join("model.json")),
        samples: 2000,
        ..PipelineConfig::default()
    };

    let hours: Vec<_> = year_hours(2017).filter(|t| (8..18).contains(&chrono::Timelike::hour(t))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut medians = Vec::new();
    for i in 0..40u64 {
        let t = hours[rng.random_range(0..hours.len())];
        let snap = gen_snapshot(&w, length, speed, t, i);
        let params = SceneParams {
            image_id: format!("img-{i}"),
            n_on: snap.count as usize,
            n_off: 10,
            n_false_positives: 2,
            ..SceneParams::default()
        };
        let scene = gen_scene(&road, &params, i).unwrap();
        let boxes = d.join("boxes.csv");
        write_boxes(&boxes, &scene.predictions).unwrap();
        let section = Section {
            section_id: "s".into(),
            length,
            region: "BR".into(),
            road_id: None,
        };
        let run = run_pipeline(&PipelineConfig { seed: i, ..config.clone() }, &boxes, t, &section, None).unwrap();
        assert_eq!(run.stages.boxes_in, scene.predictions.len());
        assert_eq!(run.stages.after_road, snap.count as usize);
        medians.push(run.estimate.median);
    }
    medians.sort_by(f64::total_cmp);
    let mm = 0.5 * (medians[19] + medians[20]);
    assert!((mm / 2400.0 - 1.0).abs() < 0.15, "median of medians {mm}");
}

#[test]
fn generated_counts_recover_the_surface_near_the_noise_floor() {
    let w = world(2400.0, 4);
    let train = common::factor_rows(&common::region_counts(&w, "A", 4, 5));
    let test = common::factor_rows(&common::region_counts(&w, "B", 2, 6));
    let floor = common::noise_floor(&w);
    for spec in [ModelSpec::DowHourInteraction, ModelSpec::RandomForest] {
        let m = fit_factor_model(spec, &train, &[], &FitOptions::default()).unwrap();
        let mae = mean_absolute_error(&m, &test);
        assert!(mae <= 3.0 * floor, "{spec}: {mae} vs floor {floor}");
    }
}

#[test]
fn stage_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let w = world(2400.0, 7);
    let rows = common::factor_rows(&common::region_counts(&w, "A", 1, 8));
    let model = fit_factor_model(ModelSpec::DowHour, &rows, &[], &FitOptions::default()).unwrap();
    write_model(&d.join("m.json"), &model).unwrap();
    let road = straight_road(GeoPoint::new(4.35, 50.85).unwrap(), 500.0, 8.0).unwrap();
    write_roads(&d.join("r.geojson"), std::slice::from_ref(&road)).unwrap();
    let mut scene = gen_scene(&road, &SceneParams::default(), 1).unwrap();
    write_boxes(&d.join("ok.csv"), &scene.predictions).unwrap();
    scene.predictions[3].score = None;
    write_boxes(&d.join("b.csv"), &scene.predictions).unwrap();

    let config = PipelineConfig {
        roads: Some(d.join("r.geojson")),
        model: Some(d.join("m.json")),
        ..PipelineConfig::default()
    };
    let section = Section {
        section_id: "s".into(),
        length: Length::km(0.5),
        region: "BR".into(),
        road_id: None,
    };
    let t = year_hours(2017).nth(4000).unwrap();
    let run = |boxes: &Path, section: &Section| run_pipeline(&config, boxes, t, section, None);

    let e = run(&d.join("b.csv"), &section).unwrap_err();
    assert!(e.to_string().starts_with("threshold filter: "), "{e}");
    assert_eq!(e.exit_code(), 2);

    let other = Section {
        road_id: Some("elsewhere".into()),
        ..section.clone()
    };
    let e = run(&d.join("ok.csv"), &other).unwrap_err();
    assert!(e.to_string().starts_with("road filter: "), "{e}");

    let unknown = Section {
        region: "XX".into(),
        ..section
    };
    let e = run(&d.join("ok.csv"), &unknown).unwrap_err();
    assert!(matches!(e, Error::Stage { stage: "speed", .. }), "{e}");
}
