use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::EnsembleConfig;
use super::model::CascadeModel;
use super::refine::{template_scale, PoseRefiner, RefinerConfig, RefinerExample};
use super::train::{train_sequential, TrainingReport, TrainingSet};
use crate::detect::{median_filter, window_depth, window_side, GridPoint, ScanConfig};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureConfig};
use crate::geometry::{BoundingBox, DepthImage, PinholeCamera};
use crate::pose_tree::{build_hierarchy, kmeans_quantize, PoseTree, Quantization};
use crate::synth::{canonical_label, Dataset, Sample};

/// Settings for training a model from a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Pose classes (K).
    pub classes: usize,
    /// Tree levels including root and leaves.
    pub levels: usize,
    pub ensemble: EnsembleConfig,
    pub feature: FeatureConfig,
    pub kmeans_iters: usize,
    /// Extra positives per sample, shifted by up to half a stride.
    pub positive_jitter: usize,
    pub refiner: RefinerConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            classes: 100,
            levels: 6,
            ensemble: EnsembleConfig::default(),
            feature: FeatureConfig::default(),
            kmeans_iters: 100,
            positive_jitter: 0,
            refiner: RefinerConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.levels == 0 {
            return Err(Error::invalid("classes and levels must be positive"));
        }
        self.ensemble.validate()?;
        self.refiner.validate()?;
        self.feature.validate()
    }
}

/// Window the detector would place on a hand centred at `(cx, cy)`: sized by
/// the scale map at the window's reference depth.
pub fn hand_window(
    filtered: &DepthImage,
    cx: f64,
    cy: f64,
    camera: &PinholeCamera,
    scan: &ScanConfig,
    fallback_depth: f64,
) -> (BoundingBox, f64) {
    let d = window_depth(filtered, cx, cy, scan.max_range, scan.stride / 2).unwrap_or(fallback_depth);
    (BoundingBox::square(cx, cy, window_side(camera, scan.hand_size, d)), d)
}

fn mean_depth(sample: &Sample) -> f64 {
    let pts = &sample.keypoints_3d[1..];
    pts.iter().map(|p| p[2]).sum::<f64>() / pts.len() as f64
}

/// Positive windows of one sample: its detector window and jittered copies,
/// with the canonical label of the unshifted one.
struct Positives {
    label: Vec<f64>,
    features: Vec<Vec<f64>>,
}

/// Descriptors of every training window in the dataset.
pub struct WindowSet {
    /// Canonical labels of the samples, relative to their detector windows.
    pub labels: Vec<Vec<f64>>,
    /// Per sample, its positive descriptors.
    pub positives: Vec<Vec<Vec<f64>>>,
    pub negatives: Vec<Vec<f64>>,
}

/// Canonical labels of every sample relative to its detector window.
pub fn sample_labels(dataset: &Dataset, scan: &ScanConfig) -> Result<Vec<Vec<f64>>> {
    let camera = dataset.manifest.camera;
    let scan = ScanConfig {
        hand_size: dataset.manifest.hand_size,
        ..*scan
    };
    dataset
        .manifest
        .samples
        .par_iter()
        .map(|s| {
            let filtered = median_filter(&dataset.read_frame(&s.depth_file)?, scan.median_radius);
            let (cx, cy) = s.bbox.center();
            let (window, _) = hand_window(&filtered, cx, cy, &camera, &scan, mean_depth(s));
            canonical_label(&s.keypoints_2d, &window)
        })
        .collect()
}

/// Extracts positive and negative descriptors from the dataset frames.
pub fn collect_windows(dataset: &Dataset, scan: &ScanConfig, cfg: &TrainConfig) -> Result<WindowSet> {
    let camera = dataset.manifest.camera;
    let per_sample: Vec<(Positives, Vec<Vec<f64>>)> = dataset
        .manifest
        .samples
        .par_iter()
        .map(|s| {
            let filtered = median_filter(&dataset.read_frame(&s.depth_file)?, scan.median_radius);
            let (cx, cy) = s.bbox.center();
            let (window, d) = hand_window(&filtered, cx, cy, &camera, scan, mean_depth(s));
            let label = canonical_label(&s.keypoints_2d, &window)?;
            let mut features = vec![extract(&filtered, &window, d, &cfg.feature)?.values];
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (s.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let reach = scan.stride as f64 / 2.0;
            for _ in 0..cfg.positive_jitter {
                let jx = cx + rng.random_range(-reach..=reach);
                let jy = cy + rng.random_range(-reach..=reach);
                let (w, d) = hand_window(&filtered, jx, jy, &camera, scan, mean_depth(s));
                features.push(extract(&filtered, &w, d, &cfg.feature)?.values);
            }
            let negatives = s
                .negatives
                .iter()
                .map(|n| Ok(extract(&filtered, &n.bbox, n.depth, &cfg.feature)?.values))
                .collect::<Result<Vec<_>>>()?;
            Ok((Positives { label, features }, negatives))
        })
        .collect::<Result<_>>()?;
    let background: Vec<Vec<Vec<f64>>> = dataset
        .manifest
        .backgrounds
        .par_iter()
        .map(|b| {
            let filtered = median_filter(&dataset.read_frame(&b.depth_file)?, scan.median_radius);
            b.negatives
                .iter()
                .map(|n| Ok(extract(&filtered, &n.bbox, n.depth, &cfg.feature)?.values))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut out = WindowSet {
        labels: Vec::new(),
        positives: Vec::new(),
        negatives: Vec::new(),
    };
    for (p, n) in per_sample {
        out.labels.push(p.label);
        out.positives.push(p.features);
        out.negatives.extend(n);
    }
    out.negatives.extend(background.into_iter().flatten());
    Ok(out)
}

/// Shifted windows around every training hand, labelled with where the hand
/// sits relative to the window and the scale its class template fits at.
pub fn refiner_examples(
    dataset: &Dataset,
    assignments: &[usize],
    templates: &[Vec<f64>],
    scan: &ScanConfig,
    cfg: &TrainConfig,
) -> Result<Vec<RefinerExample>> {
    let camera = dataset.manifest.camera;
    let per_sample: Vec<Vec<RefinerExample>> = dataset
        .manifest
        .samples
        .par_iter()
        .zip(assignments)
        .map(|(s, &class)| {
            let filtered = median_filter(&dataset.read_frame(&s.depth_file)?, scan.median_radius);
            let (cx, cy) = s.bbox.center();
            let fit = template_scale(&templates[class], &s.keypoints_2d, (cx, cy));
            let mut rng = ChaCha8Rng::seed_from_u64(!cfg.seed ^ (s.id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let reach = cfg.refiner.reach;
            let mut out = Vec::new();
            for _ in 0..cfg.refiner.windows {
                let x = (cx + rng.random_range(-reach..=reach)).round();
                let y = (cy + rng.random_range(-reach..=reach)).round();
                let d = f64::from(filtered.get_or_invalid(x as i64, y as i64));
                if d == 0.0 || d > scan.max_range {
                    continue;
                }
                let point = GridPoint {
                    x: x as usize,
                    y: y as usize,
                    depth: d,
                };
                let window = point.window(window_side(&camera, scan.hand_size, d));
                out.push(RefinerExample {
                    class,
                    descriptor: extract(&filtered, &window, d, &cfg.feature)?.values,
                    target: [
                        (cx - x) / window.w,
                        (cy - y) / window.w,
                        (fit / window.w).clamp(0.5, 2.0).ln(),
                    ],
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// Everything produced by [`train_model`].
pub struct TrainedModel {
    pub model: CascadeModel,
    pub report: TrainingReport,
    pub quantization: Quantization,
    pub tree: PoseTree,
    pub set: TrainingSet,
}

/// Quantises the dataset's poses, builds the class hierarchy and trains the
/// cascade on the dataset windows.
pub fn train_model(dataset: &Dataset, scan: &ScanConfig, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let n = dataset.manifest.samples.len();
    if cfg.classes > n {
        return Err(Error::invalid(format!(
            "K = {} exceeds the {n} training samples",
            cfg.classes
        )));
    }
    let scan = ScanConfig {
        hand_size: dataset.manifest.hand_size,
        ..*scan
    };
    scan.validate()?;
    let windows = collect_windows(dataset, &scan, cfg)?;
    let quantization = kmeans_quantize(&windows.labels, cfg.classes, cfg.seed, cfg.kmeans_iters)?;
    let tree = build_hierarchy(&quantization.classes, cfg.levels)?;

    let mut set = TrainingSet::default();
    for (pos, &class) in windows.positives.into_iter().zip(&quantization.assignments) {
        for x in pos {
            set.push(x, Some(class));
        }
    }
    for x in windows.negatives {
        set.push(x, None);
    }
    let shape = super::ensemble::GridShape {
        cells_x: cfg.feature.cells(),
        cells_y: cfg.feature.cells(),
        bins: cfg.feature.bins,
    };
    let (ensembles, report) = train_sequential(&tree, &set, shape, &cfg.ensemble, cfg.seed)?;
    let mut templates = vec![Vec::new(); cfg.classes];
    for c in &quantization.classes {
        templates[c.id] = c.centroid.clone();
    }
    let refiner = if cfg.refiner.windows > 0 {
        let examples = refiner_examples(dataset, &quantization.assignments, &templates, &scan, cfg)?;
        Some(PoseRefiner::fit(
            &examples,
            cfg.classes,
            shape.dim(),
            cfg.refiner.ridge,
        )?)
    } else {
        None
    };
    let model = CascadeModel {
        tree: tree.clone(),
        ensembles,
        feature: cfg.feature,
        templates,
        camera: dataset.manifest.camera,
        scan,
        refiner,
        training: serde_json::to_value(cfg).map_err(|e| Error::invalid(e.to_string()))?,
    };
    model.validate()?;
    Ok(TrainedModel {
        model,
        report,
        quantization,
        tree,
        set,
    })
}
