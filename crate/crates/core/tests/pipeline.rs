use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use handcascade::cascade::{train_model, CascadeModel, TrainConfig, TrainedModel};
use handcascade::detect::{detect_top_n, median_filter, refine_candidate, ScanConfig, ScanMode};
use handcascade::synth::{generate_dataset, Dataset, SynthConfig};

struct Shared {
    data: Dataset,
    trained: TrainedModel,
}

fn dataset(name: &str, count: usize, seed: u64) -> Dataset {
    let dir: PathBuf = Path::new(env!("CARGO_TARGET_TMPDIR")).join("pipeline").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = SynthConfig {
        count,
        seed,
        ..SynthConfig::default()
    };
    generate_dataset(&cfg, &dir).unwrap();
    Dataset::load(&dir).unwrap()
}

fn shared() -> &'static Shared {
    static S: OnceLock<Shared> = OnceLock::new();
    S.get_or_init(|| {
        let data = dataset("train", 120, 9);
        let cfg = TrainConfig {
            classes: 5,
            levels: 3,
            seed: 2,
            ..TrainConfig::default()
        };
        let trained = train_model(&data, &ScanConfig::default(), &cfg).unwrap();
        Shared { data, trained }
    })
}

#[test]
fn model_file_round_trips_exactly() {
    let m = &shared().trained.model;
    let bytes = m.to_json().unwrap();
    let back = CascadeModel::from_json(&bytes, Path::new("m.json")).unwrap();
    assert_eq!(&back, m);
    assert_eq!(back.to_json().unwrap(), bytes);
    assert!(back.refiner.is_some());
}

#[test]
fn model_with_unknown_version_is_rejected() {
    let m = &shared().trained.model;
    let mut v: serde_json::Value = serde_json::from_slice(&m.to_json().unwrap()).unwrap();
    v["version"] = serde_json::json!(99);
    let err = CascadeModel::from_json(&serde_json::to_vec(&v).unwrap(), Path::new("m.json")).unwrap_err();
    assert!(err.to_string().contains("version 99"));
}

#[test]
fn every_class_has_a_leaf_and_a_template() {
    let m = &shared().trained.model;
    assert_eq!(m.classes(), 5);
    assert_eq!(m.tree.leaves().len(), 5);
    assert!(m.tree.levels() <= 3);
    let recall = &shared().trained.report.leaf_recall;
    assert_eq!(recall.iter().map(|r| r.1).sum::<usize>(), 120);
}

#[test]
fn detections_respect_image_rank_and_suppression() {
    let s = shared();
    let model = &s.trained.model;
    let scan = ScanConfig { top_n: 6, ..model.scan };
    for smp in s.data.manifest.samples.iter().take(8) {
        let frame = s.data.read_frame(&smp.depth_file).unwrap();
        let d = detect_top_n(&frame, model, &scan, ScanMode::Sparse).unwrap();
        assert!(d.candidates.len() <= 6);
        assert!(d.locations <= d.considered);
        for (i, c) in d.candidates.iter().enumerate() {
            assert!(c.bbox.x >= 0.0 && c.bbox.y >= 0.0);
            assert!(c.bbox.x + c.bbox.w <= 320.0 && c.bbox.y + c.bbox.h <= 240.0);
            assert_eq!(c.keypoints.len(), 20);
            for later in &d.candidates[i + 1..] {
                assert!((c.votes, c.margin) >= (later.votes, later.margin) || c.votes > later.votes);
                if later.class == c.class {
                    assert!(c.bbox.iou(&later.bbox) <= scan.nms_iou);
                }
            }
        }
    }
}

#[test]
fn refinement_off_matches_a_model_without_refiner() {
    let s = shared();
    let mut plain = s.trained.model.clone();
    plain.refiner = None;
    let off = ScanConfig {
        regress_iterations: 0,
        ..s.trained.model.scan
    };
    let frame = s.data.read_frame(&s.data.manifest.samples[0].depth_file).unwrap();
    let a = detect_top_n(&frame, &s.trained.model, &off, ScanMode::Sparse).unwrap();
    let b = detect_top_n(&frame, &plain, &s.trained.model.scan, ScanMode::Sparse).unwrap();
    assert_eq!(a, b);
}

#[test]
fn refinement_keeps_class_votes_and_window_size() {
    let s = shared();
    let model = &s.trained.model;
    let frame = s.data.read_frame(&s.data.manifest.samples[1].depth_file).unwrap();
    let filtered = median_filter(&frame, model.scan.median_radius);
    let off = ScanConfig {
        regress_iterations: 0,
        ..model.scan
    };
    let d = detect_top_n(&frame, model, &off, ScanMode::Sparse).unwrap();
    for c in &d.candidates {
        let r = refine_candidate(&filtered, c, model, &model.scan).unwrap();
        assert_eq!((r.class, r.votes, r.margin), (c.class, c.votes, c.margin));
        assert_eq!(r.window.w, c.window.w);
        assert!(r.keypoints.iter().flatten().all(|v| v.is_finite()));
    }
}
