use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mvpart::dataset::{save_manifest, ManifestInstruction, ObjectManifest, QueryType};
use mvpart::gateway::{oracle_segment, write_mask_png, ReplaySegmenter};
use mvpart::geometry::ply::{load_ply, write_ply};
use mvpart::geometry::{PointCloud, BACKGROUND};
use mvpart::pipeline::{
    evaluate, query_id, run_manifest, Backend, PipelineConfig, PipelineError, RUN_LOG_FILE,
};
use mvpart::render::{make_camera_rig, render_views};
use mvpart::synth::{write_synthetic, Shape};
use nalgebra::Point3;

fn small_config() -> PipelineConfig {
    PipelineConfig {
        image_size: 160,
        jobs: 2,
        ..Default::default()
    }
}

fn instruction(category: i32) -> ManifestInstruction {
    ManifestInstruction {
        query: format!("Which part is part {category}?"),
        query_type: QueryType::Normal,
        category,
    }
}

fn entry(object_id: &str, category: &str, ply: &str, instructions: Vec<ManifestInstruction>) -> ObjectManifest {
    ObjectManifest {
        object_id: object_id.into(),
        object_category: category.into(),
        ply_path: ply.into(),
        instructions,
        label_property: "label".into(),
        part_names: BTreeMap::new(),
    }
}

fn line_cloud(labels: Vec<i32>) -> PointCloud {
    let n = labels.len();
    let positions = (0..n).map(|i| Point3::new(i as f64 * 0.1, (i % 3) as f64 * 0.05, 0.0)).collect();
    PointCloud::new(positions, vec![[120, 60, 30]; n]).unwrap().with_labels(labels).unwrap()
}

#[test]
fn empty_manifest_is_a_successful_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(&manifest, "[]").unwrap();
    let out = dir.path().join("out");
    let log = run_manifest(&manifest, &small_config(), &out).unwrap();
    assert!(log.objects.is_empty());
    assert!(out.join(RUN_LOG_FILE).is_file());
}

#[test]
fn missing_inputs_abort_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    save_manifest(&[entry("a", "pot", "absent.ply", vec![instruction(0)])], &manifest).unwrap();
    let err = run_manifest(&manifest, &small_config(), &dir.path().join("out")).unwrap_err();
    assert!(matches!(err, PipelineError::MissingInput(_)));
    assert!(err.is_input_error());
    assert!(!dir.path().join("out").exists());

    let err = run_manifest(&dir.path().join("none.json"), &small_config(), &dir.path().join("out")).unwrap_err();
    assert!(err.is_input_error());

    let bad = PipelineConfig { views: 0, ..small_config() };
    assert!(run_manifest(&manifest, &bad, &dir.path().join("out")).unwrap_err().is_input_error());
}

#[test]
fn unreachable_remote_fails_objects_not_the_run() {
    let dir = tempfile::tempdir().unwrap();
    write_ply(&line_cloud(vec![0; 20]), dir.path().join("a.ply"), false).unwrap();
    let manifest = dir.path().join("m.json");
    save_manifest(&[entry("a", "pot", "a.ply", vec![instruction(0)])], &manifest).unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = PipelineConfig {
        views: 2,
        image_size: 32,
        remote_retries: 0,
        remote_timeout_s: 5.0,
        backend: Backend::Remote(format!("http://127.0.0.1:{port}")),
        ..small_config()
    };
    let log = run_manifest(&manifest, &config, &dir.path().join("out")).unwrap();
    let failed: Vec<_> = log.failures().collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].error.as_deref().unwrap().contains("connection"), "{:?}", failed[0].error);
}

#[test]
fn degenerate_objects_become_background() {
    let dir = tempfile::tempdir().unwrap();
    write_ply(&line_cloud(vec![0, 0, 1]), dir.path().join("tiny.ply"), false).unwrap();
    write_ply(&line_cloud(vec![0; 30]), dir.path().join("plain.ply"), false).unwrap();
    let manifest = dir.path().join("m.json");
    save_manifest(
        &[
            entry("tiny", "pot", "tiny.ply", vec![instruction(0)]),
            entry("silent", "pot", "plain.ply", vec![]),
            // Category 1 never occurs in this cloud.
            entry("absent", "pot", "plain.ply", vec![instruction(1)]),
        ],
        &manifest,
    )
    .unwrap();
    let out = dir.path().join("out");
    let log = run_manifest(&manifest, &small_config(), &out).unwrap();
    assert_eq!(log.failures().count(), 0);
    for id in ["tiny", "silent", "absent"] {
        let labels = load_ply(out.join(format!("{id}.ply"))).unwrap().labels().unwrap().to_vec();
        assert!(labels.iter().all(|&l| l == BACKGROUND), "{id}: {labels:?}");
    }
}

#[test]
fn replayed_oracle_masks_reproduce_the_oracle_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    fs::create_dir_all(&data).unwrap();
    let object = write_synthetic(Shape::LiddedPot, 1500, 3, &data).unwrap();
    let manifest = data.join("manifest.json");
    save_manifest(std::slice::from_ref(&object), &manifest).unwrap();
    let config = small_config();

    let oracle_out = dir.path().join("oracle");
    assert_eq!(run_manifest(&manifest, &config, &oracle_out).unwrap().failures().count(), 0);

    // Write the same masks the oracle would produce, in the replay layout.
    let masks = dir.path().join("masks");
    fs::create_dir_all(&masks).unwrap();
    let cloud = load_ply(object.resolve_ply(&data)).unwrap();
    let size = (config.image_size, config.image_size);
    let poses = make_camera_rig(&cloud, config.views, size, config.fov_deg, config.distance_factor).unwrap();
    let renders = render_views(&cloud, &poses, config.splat_settings());
    let replay = ReplaySegmenter::new(&masks);
    for (q, inst) in object.instructions.iter().enumerate() {
        for render in &renders {
            let response = oracle_segment(cloud.labels().unwrap(), render, inst.category).unwrap();
            write_mask_png(&response.mask, &replay.mask_path(&query_id(&object.object_id, q), render.view_index)).unwrap();
        }
    }
    let replay_out = dir.path().join("replay");
    let replay_config = PipelineConfig {
        backend: Backend::Replay(masks),
        ..config
    };
    assert_eq!(run_manifest(&manifest, &replay_config, &replay_out).unwrap().failures().count(), 0);

    let ply = format!("{}.ply", object.object_id);
    let a = load_ply(oracle_out.join(&ply)).unwrap();
    let b = load_ply(replay_out.join(&ply)).unwrap();
    assert_eq!(a.labels(), b.labels());

    let report = evaluate(&manifest, &replay_out, false).unwrap();
    assert!(report.overall > 0.95, "overall {}", report.overall);
    let explanation = fs::read_to_string(replay_out.join(format!("{}.txt", query_id(&object.object_id, 0)))).unwrap();
    assert!(explanation.starts_with("view_index: "));
}

fn write_labelled(path: &Path, labels: Vec<i32>) {
    write_ply(&line_cloud(labels), path, false).unwrap();
}

#[test]
fn evaluation_of_files_matches_the_hand_case() {
    let dir = tempfile::tempdir().unwrap();
    write_labelled(&dir.path().join("gt.ply"), vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
    let preds = dir.path().join("pred");
    fs::create_dir_all(&preds).unwrap();
    write_labelled(&preds.join("pot_a.ply"), vec![0, 0, 0, 0, 0, 1, 0, 1, 1, 1]);
    let manifest = dir.path().join("m.json");
    save_manifest(&[entry("pot_a", "pot", "gt.ply", vec![instruction(0), instruction(1)])], &manifest).unwrap();

    let report = evaluate(&manifest, &preds, false).unwrap();
    let expected = (5.0 / 7.0 + 3.0 / 5.0) / 2.0;
    assert!((report.overall - expected).abs() < 1e-12);
    assert!((report.overall - 0.657).abs() < 1e-3);

    // A second object without a prediction file is an input error.
    save_manifest(
        &[
            entry("pot_a", "pot", "gt.ply", vec![instruction(0)]),
            entry("pot_b", "pot", "gt.ply", vec![instruction(0)]),
        ],
        &manifest,
    )
    .unwrap();
    let err = evaluate(&manifest, &preds, false).unwrap_err();
    assert!(matches!(err, PipelineError::MissingPrediction(ref id) if id == "pot_b"));
    assert!(err.is_input_error());
}

#[test]
fn one_part_in_two_object_categories_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_labelled(&dir.path().join("gt.ply"), vec![0; 10]);
    write_labelled(&dir.path().join("x.ply"), vec![0; 10]);
    write_labelled(&dir.path().join("y.ply"), vec![0; 10]);
    let manifest = dir.path().join("m.json");
    save_manifest(
        &[entry("x", "pot", "gt.ply", vec![]), entry("y", "mug", "gt.ply", vec![])],
        &manifest,
    )
    .unwrap();
    assert!(matches!(evaluate(&manifest, dir.path(), false), Err(PipelineError::PartConflict { part: 0, .. })));
}
