use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::PinholeCamera;
use super::depth::DepthImage;
use super::hand::{bone_endpoints, Skeleton, KEYPOINTS};
use super::primitive::{Shape, NEAR};

/// Visibility tolerance, mm.
pub const VISIBILITY_TOLERANCE: f64 = 5.0;

/// What a pixel reports when its ray hits no shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Background {
    /// Depth of the fronto-parallel backdrop, mm.
    pub plane_depth: f64,
    /// Standard deviation of additive Gaussian noise on the backdrop, mm.
    pub noise_sigma: f64,
    /// Fraction of backdrop pixels reported as invalid (0).
    pub invalid_fraction: f64,
    pub seed: u64,
}

impl Default for Background {
    fn default() -> Self {
        Self {
            plane_depth: 900.0,
            noise_sigma: 3.0,
            invalid_fraction: 0.0,
            seed: 0,
        }
    }
}

impl Background {
    pub fn noiseless(plane_depth: f64) -> Self {
        Self {
            plane_depth,
            noise_sigma: 0.0,
            invalid_fraction: 0.0,
            seed: 0,
        }
    }

    /// Per-pixel backdrop depth; a fixed function of (seed, pixel index).
    /// `None` marks a dropped-out pixel.
    fn field(&self, n: usize) -> Vec<Option<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.noise_sigma.max(0.0)).expect("finite sigma");
        (0..n)
            .map(|_| {
                let noise = normal.sample(&mut rng);
                let drop = rng.random::<f64>() < self.invalid_fraction;
                (!drop).then_some(self.plane_depth + noise)
            })
            .collect()
    }
}

/// Solids to render, in camera coordinates.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub shapes: Vec<Shape>,
}

impl Scene {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, shape: Shape) -> Self {
        self.shapes.push(shape);
        self
    }

    /// Hand capsules (bones, palm and optionally forearm) plus attached objects.
    pub fn from_hand(skeleton: &Skeleton, objects: &[Shape], forearm: bool) -> Self {
        let mut shapes: Vec<Shape> = skeleton.capsules.iter().copied().map(Shape::Capsule).collect();
        shapes.push(Shape::Capsule(skeleton.palm));
        if forearm {
            shapes.push(Shape::Capsule(skeleton.forearm));
        }
        shapes.extend_from_slice(objects);
        Self { shapes }
    }

    pub fn extend(&mut self, other: &Scene) {
        self.shapes.extend_from_slice(&other.shapes);
    }
}

/// Float depth buffer; `f64::INFINITY` where nothing was hit.
#[derive(Debug, Clone)]
pub struct ZBuffer {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl ZBuffer {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }
}

/// Screen rectangle (inclusive) that can contain the shape's projection.
fn screen_bounds(camera: &PinholeCamera, shape: &Shape) -> Option<(usize, usize, usize, usize)> {
    let (c, r) = shape.bounding_sphere();
    if c.z + r <= NEAR {
        return None;
    }
    let full = (0, 0, camera.width - 1, camera.height - 1);
    if c.z - r <= NEAR {
        return Some(full);
    }
    let mut umin = f64::INFINITY;
    let mut umax = f64::NEG_INFINITY;
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for corner in 0..8 {
        let p = c + Vector3::new(
            if corner & 1 == 0 { -r } else { r },
            if corner & 2 == 0 { -r } else { r },
            if corner & 4 == 0 { -r } else { r },
        );
        let u = camera.fx * p.x / p.z + camera.cx;
        let v = camera.fy * p.y / p.z + camera.cy;
        umin = umin.min(u);
        umax = umax.max(u);
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    let x0 = (umin.floor() - 1.0).max(0.0);
    let y0 = (vmin.floor() - 1.0).max(0.0);
    let x1 = (umax.ceil() + 1.0).min(camera.width as f64 - 1.0);
    let y1 = (vmax.ceil() + 1.0).min(camera.height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }
    Some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

/// Nearest-surface depth of every pixel over all shapes (no backdrop).
pub fn ray_cast(camera: &PinholeCamera, scene: &Scene) -> ZBuffer {
    let (w, h) = (camera.width, camera.height);
    let mut depth = vec![f64::INFINITY; w * h];
    for shape in &scene.shapes {
        let Some((x0, y0, x1, y1)) = screen_bounds(camera, shape) else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let ray = camera.ray(x as f64, y as f64);
                if let Some(t) = shape.intersect(&ray) {
                    let slot = &mut depth[y * w + x];
                    if t < *slot {
                        *slot = t;
                    }
                }
            }
        }
    }
    ZBuffer {
        width: w,
        height: h,
        depth,
    }
}

/// Composites the backdrop behind the z-buffer and quantises to millimetres.
/// Surfaces farther than the backdrop plane are hidden by it.
pub fn composite(zbuf: &ZBuffer, background: &Background) -> (DepthImage, ZBuffer) {
    let field = background.field(zbuf.depth.len());
    let mut full = zbuf.clone();
    let mut data = Vec::with_capacity(zbuf.depth.len());
    for (i, z) in full.depth.iter_mut().enumerate() {
        let hit = *z < background.plane_depth;
        if !hit {
            *z = background.plane_depth;
        }
        let value = if hit { Some(*z) } else { field[i] };
        data.push(match value {
            Some(d) => d.round().clamp(0.0, f64::from(u16::MAX)) as u16,
            None => 0,
        });
    }
    let image = DepthImage::from_vec(zbuf.width, zbuf.height, data).expect("matching size");
    (image, full)
}

pub fn render_scene(camera: &PinholeCamera, scene: &Scene, background: &Background) -> DepthImage {
    composite(&ray_cast(camera, scene), background).0
}

/// Rendered hand scene: the depth map and per-keypoint visibility.
#[derive(Debug, Clone)]
pub struct Rendering {
    pub depth: DepthImage,
    pub visibility: [bool; KEYPOINTS],
}

/// Depth at which the ray through pixel `(x, y)` enters the bones that meet
/// at keypoint `k` (the forearm counts for the wrist).
fn own_surface(camera: &PinholeCamera, skeleton: &Skeleton, k: usize, x: usize, y: usize) -> Option<f64> {
    let ray = camera.ray(x as f64, y as f64);
    let bones = bone_endpoints();
    let own = skeleton
        .capsules
        .iter()
        .zip(bones)
        .filter(|(_, (a, b))| *a == k || *b == k)
        .map(|(c, _)| *c)
        .chain((k == 0).then_some(skeleton.forearm));
    own.filter_map(|c| Shape::Capsule(c).intersect(&ray))
        .min_by(f64::total_cmp)
}

/// Renders a posed hand with attached objects. A keypoint is visible when it
/// projects inside the image and nothing lies more than
/// [`VISIBILITY_TOLERANCE`] in front of the surface of its own bones along
/// the pixel ray.
pub fn render_depth(
    camera: &PinholeCamera,
    skeleton: &Skeleton,
    objects: &[Shape],
    forearm: bool,
    background: &Background,
) -> Rendering {
    let scene = Scene::from_hand(skeleton, objects, forearm);
    let (depth, zbuf) = composite(&ray_cast(camera, &scene), background);
    let mut visibility = [false; KEYPOINTS];
    for (k, p) in skeleton.keypoints.iter().enumerate() {
        let Ok(proj) = camera.project(p) else {
            continue;
        };
        let Some((x, y)) = camera.pixel(proj.u, proj.v) else {
            continue;
        };
        let surface = own_surface(camera, skeleton, k, x, y).unwrap_or(p.z - skeleton.joint_radii[k]);
        visibility[k] = zbuf.at(x, y) >= surface - VISIBILITY_TOLERANCE;
    }
    Rendering { depth, visibility }
}
