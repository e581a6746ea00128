use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector3};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grasps::select_grasps;
use super::label::canonical_label;
use super::perturb::PerturbationConfig;
use super::sampler::{rejection_sample, sample_rng, AcceptedPose, Priors};
use super::viewpoint::{Viewpoint, ViewpointPrior};
use crate::detect::{median_filter, valid_grid, window_side, ScanConfig};
use crate::error::{Error, Result};
use crate::geometry::{
    render_depth, render_scene, Background, BoundingBox, Capsule, DepthImage, HandPose, HandShape, PinholeCamera,
    Scene, Shape, Skeleton, POSE_DOF,
};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const FRAMES_DIR: &str = "frames";

/// Stream offsets keeping the random draws of different stages apart.
const NEGATIVE_STREAM: u64 = 1 << 40;
const BACKGROUND_STREAM: u64 = 2 << 40;

/// How negative training windows are harvested from each frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarvestConfig {
    /// Negatives kept per hand frame.
    pub per_frame: usize,
    /// Negatives kept per background frame.
    pub per_background: usize,
    /// Windows overlapping the ground-truth box at least this much are skipped.
    pub max_iou: f64,
    pub stride: usize,
    pub max_range: f64,
    pub median_radius: usize,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        let scan = ScanConfig::default();
        Self {
            per_frame: 8,
            per_background: 16,
            max_iou: 0.3,
            stride: scan.stride,
            max_range: scan.max_range,
            median_radius: scan.median_radius,
        }
    }
}

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub count: usize,
    pub seed: u64,
    pub camera: PinholeCamera,
    pub viewpoint: ViewpointPrior,
    pub sigma: [f64; POSE_DOF],
    /// Grasp names; empty selects the whole built-in library.
    pub grasps: Vec<String>,
    /// Cycle through the grasps instead of drawing them at random.
    pub stratified: bool,
    /// Render the objects attached to grasps.
    pub objects: bool,
    pub forearm: bool,
    pub background: Background,
    /// Hand-free frames with distractor objects; `None` means `count / 10`.
    pub background_frames: Option<usize>,
    pub harvest: HarvestConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            camera: PinholeCamera::default(),
            viewpoint: ViewpointPrior::default(),
            sigma: PerturbationConfig::default().sigma,
            grasps: Vec::new(),
            stratified: true,
            objects: true,
            forearm: true,
            background: Background::default(),
            background_frames: None,
            harvest: HarvestConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count must be positive"));
        }
        self.camera.validate()?;
        self.viewpoint.validate()?;
        self.perturbation().validate()?;
        select_grasps(&self.grasps)?;
        let b = &self.background;
        if !(b.plane_depth > 0.0) || !(b.noise_sigma >= 0.0) || !(0.0..=1.0).contains(&b.invalid_fraction) {
            return Err(Error::invalid(format!("bad background model {b:?}")));
        }
        let h = &self.harvest;
        if h.stride == 0 || !(h.max_range > 0.0) || !(0.0..=1.0).contains(&h.max_iou) {
            return Err(Error::invalid(format!("bad harvest settings {h:?}")));
        }
        Ok(())
    }

    pub fn perturbation(&self) -> PerturbationConfig {
        PerturbationConfig {
            sigma: self.sigma,
            seed: self.seed,
        }
    }

    pub fn background_count(&self) -> usize {
        self.background_frames.unwrap_or(self.count / 10)
    }
}

/// A training window: square box and the depth it was sized for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub bbox: BoundingBox,
    pub depth: f64,
}

/// One rendered hand frame with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    /// Depth image path relative to the manifest directory.
    pub depth_file: String,
    pub grasp: String,
    pub pose: HandPose,
    pub viewpoint: Viewpoint,
    /// Wrist followed by base, PIP, DIP and tip of each finger, camera mm.
    pub keypoints_3d: Vec<[f64; 3]>,
    /// The 20 scored keypoints (wrist excluded), px.
    pub keypoints_2d: Vec<[f64; 2]>,
    /// Visibility of the 21 keypoints in `keypoints_3d` order.
    pub visibility: Vec<bool>,
    pub bbox: BoundingBox,
    pub has_object: bool,
    /// Pose class assigned by quantisation.
    pub leaf_class: Option<usize>,
    pub negatives: Vec<Window>,
}

impl Sample {
    /// Visibility of the scored keypoints.
    pub fn scored_visibility(&self) -> &[bool] {
        &self.visibility[1..]
    }

    pub fn label(&self) -> Result<Vec<f64>> {
        canonical_label(&self.keypoints_2d, &self.bbox)
    }
}

/// A hand-free frame used only for negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundFrame {
    pub id: usize,
    pub depth_file: String,
    pub negatives: Vec<Window>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub camera: PinholeCamera,
    /// Physical hand size used for box sizes, mm.
    pub hand_size: f64,
    pub config: SynthConfig,
    pub proposals: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub samples: Vec<Sample>,
    pub backgrounds: Vec<BackgroundFrame>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Loads `path`, which is either a manifest file or a directory holding
    /// one, and checks that every referenced frame exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| Error::json(&file, e))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Version {
                what: "dataset manifest",
                found: manifest.version,
                expected: MANIFEST_VERSION,
            });
        }
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let files = manifest
            .samples
            .iter()
            .map(|s| &s.depth_file)
            .chain(manifest.backgrounds.iter().map(|b| &b.depth_file));
        for f in files {
            let p = root.join(f);
            if !p.is_file() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "frame listed in manifest is missing"),
                ));
            }
        }
        Ok(Self { root, manifest })
    }

    pub fn frame_path(&self, depth_file: &str) -> PathBuf {
        self.root.join(depth_file)
    }

    pub fn read_frame(&self, depth_file: &str) -> Result<DepthImage> {
        DepthImage::read_pgm(self.frame_path(depth_file))
    }
}

/// Square box centred on the mean of the 2D keypoints, with the expected
/// image size of the hand at the depth of the 3D keypoint centroid, grown
/// symmetrically until it holds every visible keypoint.
pub fn ground_truth_box(
    keypoints_3d: &[Vector3<f64>],
    keypoints_2d: &[[f64; 2]],
    visibility: &[bool],
    camera: &PinholeCamera,
    hand_size: f64,
) -> Result<BoundingBox> {
    if keypoints_2d.is_empty() || keypoints_3d.is_empty() {
        return Err(Error::invalid("no keypoints"));
    }
    let n = keypoints_2d.len() as f64;
    let cu = keypoints_2d.iter().map(|p| p[0]).sum::<f64>() / n;
    let cv = keypoints_2d.iter().map(|p| p[1]).sum::<f64>() / n;
    let depth = keypoints_3d.iter().map(|p| p.z).sum::<f64>() / keypoints_3d.len() as f64;
    if !(depth > 0.0) {
        return Err(Error::BehindCamera(depth));
    }
    let mut half = window_side(camera, hand_size, depth) / 2.0;
    for (p, &vis) in keypoints_2d.iter().zip(visibility) {
        if vis {
            half = half.max((p[0] - cu).abs()).max((p[1] - cv).abs());
        }
    }
    Ok(BoundingBox::square(cu, cv, 2.0 * half))
}

/// Up to `keep` grid windows of `filtered` whose overlap with `avoid` is
/// below the harvest threshold, chosen uniformly with `rng`.
fn harvest<R: Rng + ?Sized>(
    filtered: &DepthImage,
    camera: &PinholeCamera,
    hand_size: f64,
    cfg: &HarvestConfig,
    avoid: Option<&BoundingBox>,
    keep: usize,
    rng: &mut R,
) -> Vec<Window> {
    let scan = ScanConfig {
        stride: cfg.stride,
        max_range: cfg.max_range,
        ..ScanConfig::default()
    };
    let pool: Vec<Window> = valid_grid(filtered, &scan)
        .points
        .iter()
        .map(|p| Window {
            bbox: p.window(window_side(camera, hand_size, p.depth)),
            depth: p.depth,
        })
        .filter(|w| avoid.is_none_or(|b| w.bbox.iou(b) < cfg.max_iou))
        .collect();
    if pool.len() <= keep {
        return pool;
    }
    let mut picked = sample_indices(rng, pool.len(), keep).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i]).collect()
}

fn frame_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn to_array(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Renders one accepted pose and assembles its sample record.
fn build_sample(
    index: usize,
    accepted: &AcceptedPose,
    grasp_name: &str,
    object: Option<Shape>,
    config: &SynthConfig,
    shape: &HandShape,
) -> Result<(Sample, DepthImage)> {
    let camera = &config.camera;
    let skeleton: &Skeleton = &accepted.skeleton;
    let background = Background {
        seed: frame_seed(config.background.seed, index as u64),
        ..config.background
    };
    let objects: Vec<Shape> = object.into_iter().collect();
    let rendering = render_depth(camera, skeleton, &objects, config.forearm, &background);
    let keypoints_2d = skeleton
        .scored()
        .iter()
        .map(|p| camera.project(p).map(|q| [q.u, q.v]))
        .collect::<Result<Vec<_>>>()?;
    let visibility = rendering.visibility.to_vec();
    let bbox = ground_truth_box(skeleton.scored(), &keypoints_2d, &visibility[1..], camera, shape.size())?;
    let filtered = median_filter(&rendering.depth, config.harvest.median_radius);
    let mut rng = sample_rng(config.seed, NEGATIVE_STREAM + index as u64);
    let negatives = harvest(
        &filtered,
        camera,
        shape.size(),
        &config.harvest,
        Some(&bbox),
        config.harvest.per_frame,
        &mut rng,
    );
    let sample = Sample {
        id: index,
        depth_file: format!("{FRAMES_DIR}/sample_{index:05}.pgm"),
        grasp: grasp_name.to_string(),
        pose: accepted.pose,
        viewpoint: accepted.viewpoint,
        keypoints_3d: skeleton.keypoints.iter().map(to_array).collect(),
        keypoints_2d,
        visibility,
        bbox,
        has_object: !objects.is_empty(),
        leaf_class: None,
        negatives,
    };
    Ok((sample, rendering.depth))
}

/// Random primitives floating in front of the backdrop, optionally with an
/// arm-like capsule entering from the bottom edge.
pub fn distractor_scene<R: Rng + ?Sized>(camera: &PinholeCamera, rng: &mut R) -> Scene {
    let mut scene = Scene::new();
    let count = rng.random_range(1..=3);
    for _ in 0..count {
        let u = rng.random_range(0.0..camera.width as f64);
        let v = rng.random_range(0.0..camera.height as f64);
        let d = rng.random_range(300.0..740.0);
        let center = camera.back_project(u, v, d);
        let rotation = Rotation3::from_euler_angles(
            rng.random_range(-3.2..3.2),
            rng.random_range(-3.2..3.2),
            rng.random_range(-3.2..3.2),
        );
        let shape = match rng.random_range(0..3) {
            0 => Shape::Sphere {
                center,
                radius: rng.random_range(20.0..60.0),
            },
            1 => Shape::Cylinder {
                center,
                rotation,
                radius: rng.random_range(15.0..40.0),
                half_length: rng.random_range(30.0..100.0),
            },
            _ => Shape::Cuboid {
                center,
                rotation,
                half: Vector3::new(
                    rng.random_range(10.0..75.0),
                    rng.random_range(10.0..75.0),
                    rng.random_range(10.0..75.0),
                ),
            },
        };
        scene = scene.with(shape);
    }
    if rng.random::<f64>() < 0.5 {
        let u = rng.random_range(0.0..camera.width as f64);
        let d = rng.random_range(300.0..650.0);
        let end = camera.back_project(u, rng.random_range(80.0..200.0), d);
        let start = camera.back_project(
            u + rng.random_range(-60.0..60.0),
            camera.height as f64 + 60.0,
            d - 120.0,
        );
        scene = scene.with(Shape::Capsule(Capsule {
            a: start,
            b: end,
            radius: rng.random_range(22.0..32.0),
        }));
    }
    scene
}

fn write_frame(root: &Path, rel: &str, depth: &DepthImage) -> Result<()> {
    depth.write_pgm(root.join(rel))
}

/// Samples, renders and writes a dataset into `out_dir`, which must exist.
/// The manifest is written last, so a failed run leaves no manifest behind.
pub fn generate_dataset(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    config.validate()?;
    let out = out_dir.as_ref();
    if !out.is_dir() {
        return Err(Error::io(
            out,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    let frames = out.join(FRAMES_DIR);
    fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;

    let shape = HandShape::default();
    let grasps = select_grasps(&config.grasps)?;
    let priors = Priors {
        perturbation: config.perturbation(),
        viewpoint: config.viewpoint,
    };
    let outcome = rejection_sample(
        &grasps,
        config.count,
        &priors,
        &config.camera,
        &shape,
        config.seed,
        config.stratified,
    )?;
    log::info!(
        "accepted {} of {} proposals ({:.1}%)",
        outcome.accepted.len(),
        outcome.proposals,
        100.0 * outcome.acceptance_rate()
    );

    let samples = outcome
        .accepted
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let grasp = &grasps[a.grasp];
            let object = config.objects.then(|| grasp.object.map(|o| o.place(&a.pose))).flatten();
            let (sample, depth) = build_sample(i, a, &grasp.name, object, config, &shape)?;
            write_frame(out, &sample.depth_file, &depth)?;
            Ok(sample)
        })
        .collect::<Result<Vec<_>>>()?;

    let backgrounds = (0..config.background_count())
        .into_par_iter()
        .map(|j| {
            let mut rng = sample_rng(config.seed, BACKGROUND_STREAM + j as u64);
            let scene = distractor_scene(&config.camera, &mut rng);
            let background = Background {
                seed: frame_seed(config.background.seed, BACKGROUND_STREAM + j as u64),
                ..config.background
            };
            let depth = render_scene(&config.camera, &scene, &background);
            let filtered = median_filter(&depth, config.harvest.median_radius);
            let negatives = harvest(
                &filtered,
                &config.camera,
                shape.size(),
                &config.harvest,
                None,
                config.harvest.per_background,
                &mut rng,
            );
            let frame = BackgroundFrame {
                id: j,
                depth_file: format!("{FRAMES_DIR}/background_{j:05}.pgm"),
                negatives,
            };
            write_frame(out, &frame.depth_file, &depth)?;
            Ok(frame)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        camera: config.camera,
        hand_size: shape.size(),
        config: config.clone(),
        proposals: outcome.proposals,
        accepted: outcome.accepted.len(),
        acceptance_rate: outcome.acceptance_rate(),
        samples,
        backgrounds,
    };
    write_manifest(&manifest, out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Writes `manifest` atomically (temporary file, then rename).
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    let bytes = serde_json::to_vec_pretty(manifest).map_err(|e| Error::json(path, e))?;
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
