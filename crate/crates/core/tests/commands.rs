use std::path::Path;

use lisrd_core::benchmark::{synthetic_scene, PairsManifest, ReportMode};
use lisrd_core::commands::{cmd_benchmark, cmd_generate, cmd_match, cmd_train, exit_code, MatchesFile, WeightsFile};
use lisrd_core::config::PipelineConfig;
use lisrd_core::geometry::{Homography, HomographySamplerConfig};
use lisrd_core::matching::MatchMode;
use lisrd_core::photometric::PhotometricSamplerConfig;
use lisrd_core::training::{Model, OptimizerConfig};
use lisrd_core::Image;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.metrics.image_width = 200;
    cfg.metrics.image_height = 150;
    cfg.features.max_keypoints = 300;
    cfg
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn match_same_image_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.png");
    synthetic_scene(200, 150, 3).save_png(&img).unwrap();
    let out = dir.path().join("out");
    let summary = cmd_match(&img, &img, &small_config(), MatchMode::Lisrd, &out).unwrap();
    assert!(summary.n_matches >= 1);
    assert_eq!(summary.precision, 1.0);

    let file: MatchesFile = read(&out.join("matches.json"));
    assert_eq!(file.precision, 1.0);
    assert_eq!(file.matches.mode, "lisrd");
    assert_eq!(file.matches.len(), summary.n_matches);
    assert!(file.matches.pairs.iter().all(|m| m.a < file.keypoints_a.len() && m.b < file.keypoints_b.len()));
    let weights: WeightsFile = read(&out.join("weights.json"));
    assert_eq!(weights.pairs.len(), 81);
    for p in &weights.pairs {
        assert!((p.weights.w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let overlay = Image::load(out.join("overlay.png")).unwrap();
    assert_eq!((overlay.width(), overlay.height()), (400, 150));
}

#[test]
fn match_modes_give_different_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    let scene = synthetic_scene(200, 150, 5);
    scene.save_png(&a).unwrap();
    let h = Homography::rotation_about(0.6, 100.0, 75.0);
    lisrd_core::warp::warp_image(&scene, &h).unwrap().0.save_png(&b).unwrap();
    let cfg = small_config();
    cmd_match(&a, &b, &cfg, MatchMode::Lisrd, &dir.path().join("lisrd")).unwrap();
    cmd_match(&a, &b, &cfg, MatchMode::Greedy, &dir.path().join("greedy")).unwrap();
    let l: MatchesFile = read(&dir.path().join("lisrd/matches.json"));
    let g: MatchesFile = read(&dir.path().join("greedy/matches.json"));
    assert_ne!(l.matches.pairs, g.matches.pairs);
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.png");
    let err = cmd_match(&missing, &missing, &small_config(), MatchMode::Lisrd, dir.path()).unwrap_err();
    assert_eq!(exit_code(&err), 2);
    let err = cmd_benchmark(&dir.path().join("pairs.json"), &small_config(), &[], dir.path()).unwrap_err();
    assert_eq!(exit_code(&err), 2);
    let err = cmd_generate(Some(dir.path()), &small_config(), 2, &dir.path().join("g")).unwrap_err();
    assert_eq!(exit_code(&err), 2);
}

#[test]
fn generate_identity_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.sampler = HomographySamplerConfig::identity(200.0, 150.0);
    cfg.photometric = PhotometricSamplerConfig::disabled();
    let manifest = cmd_generate(None, &cfg, 3, &dir.path().join("id")).unwrap();
    let m = PairsManifest::load(&manifest).unwrap();
    assert_eq!(m.pairs.len(), 3);
    for e in &m.pairs {
        assert!(!e.rotated && !e.illum_changed);
        let base = manifest.parent().unwrap();
        assert_eq!(std::fs::read(base.join(&e.image_a)).unwrap(), std::fs::read(base.join(&e.image_b)).unwrap());
    }

    let cfg = small_config();
    let m1 = cmd_generate(None, &cfg, 4, &dir.path().join("r1")).unwrap();
    let m2 = cmd_generate(None, &cfg, 4, &dir.path().join("r2")).unwrap();
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    for i in 0..4 {
        let name = format!("pair_{i:04}_b.png");
        assert_eq!(std::fs::read(dir.path().join("r1").join(&name)).unwrap(), std::fs::read(dir.path().join("r2").join(&name)).unwrap());
    }
}

#[test]
fn generate_reads_source_directory() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir(&src).unwrap();
    synthetic_scene(120, 90, 1).save_png(src.join("one.png")).unwrap();
    std::fs::write(src.join("notes.txt"), "ignored").unwrap();
    let manifest = cmd_generate(Some(&src), &small_config(), 2, &dir.path().join("out")).unwrap();
    let m = PairsManifest::load(manifest).unwrap();
    assert_eq!((m.width, m.height, m.pairs.len()), (200, 150, 2));
}

#[test]
fn benchmark_empty_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.sampler = HomographySamplerConfig::identity(200.0, 150.0);
    cfg.photometric = PhotometricSamplerConfig::disabled();
    let empty = cmd_generate(None, &cfg, 0, &dir.path().join("empty")).unwrap();
    let modes: Vec<ReportMode> = ["lisrd", "best_of_4"].iter().map(|m| m.parse().unwrap()).collect();
    let report = cmd_benchmark(&empty, &cfg, &modes, &dir.path().join("empty_out")).unwrap();
    assert_eq!(report.num_pairs, 0);
    assert!(report.per_pair.is_empty());
    assert_eq!(report.modes, vec!["lisrd", "best_of_4"]);

    let one = cmd_generate(None, &cfg, 1, &dir.path().join("one")).unwrap();
    let out = dir.path().join("one_out");
    let report = cmd_benchmark(&one, &cfg, &modes, &out).unwrap();
    assert_eq!(report.modes, vec!["lisrd", "best_of_4"]);
    let lisrd = report.per_pair.iter().find(|r| r.mode == "lisrd").unwrap();
    assert!(lisrd.h_estimation);
    assert!(lisrd.precision >= 0.99);
    for f in ["report.json", "table.csv", "curves.csv", "codebook.bin"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn train_with_zero_learning_rate_keeps_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.training.triplets = 2;
    cfg.training.image_width = 160;
    cfg.training.image_height = 120;
    cfg.training.stage1_steps = 2;
    cfg.training.stage2_steps = 1;
    cfg.training.points_per_triplet = 16;
    cfg.training.optimizer = OptimizerConfig { learning_rate: 0.0, ..OptimizerConfig::default() };
    let out = dir.path().join("train");
    let outcome = cmd_train(None, &cfg, &out).unwrap();
    let model = Model::load(out.join("checkpoint.bin")).unwrap();
    assert_eq!(model, outcome.model);
    let init = Model::from_codebook(&model.codebook().unwrap(), cfg.features.tiles).unwrap();
    assert_eq!(model.projections, init.projections);
    let csv = std::fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(out.join("codebook.bin").is_file());
}
