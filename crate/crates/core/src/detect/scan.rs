use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, DepthImage, HandShape, PinholeCamera};

/// Scanning-window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Grid spacing, px.
    pub stride: usize,
    /// Locations farther than this are pruned, mm.
    pub max_range: f64,
    /// Physical hand size used by the scale map, mm.
    pub hand_size: f64,
    pub median_radius: usize,
    pub nms_iou: f64,
    /// Suppress overlaps only between candidates of the same class.
    pub per_class_nms: bool,
    /// Candidates returned per frame.
    pub top_n: usize,
    /// Leaves kept per window before suppression.
    pub alternates: usize,
    /// Extra scales on each side of the scale-map size (0 = single scale).
    pub scale_steps: usize,
    pub scale_factor: f64,
    /// Half-width of the local re-scan around the best sparse hits, px (0 = off).
    pub refine_radius: usize,
    /// Spacing of the local re-scan, px.
    pub refine_step: usize,
    /// Sparse hits that get a local re-scan.
    pub refine_top: usize,
    /// Refiner passes applied to each reported candidate (0 = off).
    pub regress_iterations: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            stride: 16,
            max_range: 750.0,
            hand_size: HandShape::default().size(),
            median_radius: 1,
            nms_iou: 0.4,
            per_class_nms: true,
            top_n: 10,
            alternates: 3,
            scale_steps: 0,
            scale_factor: 1.2,
            refine_radius: 8,
            refine_step: 4,
            refine_top: 10,
            regress_iterations: 3,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if !(self.max_range > 0.0) || !(self.hand_size > 0.0) {
            return Err(Error::invalid("max range and hand size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::invalid("NMS IoU threshold must lie in [0, 1]"));
        }
        if self.top_n == 0 || self.alternates == 0 {
            return Err(Error::invalid("top N and alternates must be positive"));
        }
        if self.refine_step == 0 {
            return Err(Error::invalid("refinement step must be at least 1"));
        }
        if !(self.scale_factor > 1.0) {
            return Err(Error::invalid("scale factor must exceed 1"));
        }
        Ok(())
    }

    /// Scale multipliers tried at each location, smallest first.
    pub fn scales(&self) -> Vec<f64> {
        let k = self.scale_steps as i32;
        (-k..=k).map(|i| self.scale_factor.powi(i)).collect()
    }
}

/// Median over the `(2r+1)^2` neighbourhood, ignoring invalid (0) samples.
/// Even counts take the lower median. A pixel whose neighbourhood is entirely
/// invalid stays invalid.
pub fn median_filter(depth: &DepthImage, radius: usize) -> DepthImage {
    if radius == 0 {
        return depth.clone();
    }
    let (w, h) = (depth.width(), depth.height());
    let r = radius as i64;
    let mut buf = Vec::with_capacity((2 * radius + 1).pow(2));
    DepthImage::from_fn(w, h, |x, y| {
        buf.clear();
        for dy in -r..=r {
            for dx in -r..=r {
                let v = depth.get_or_invalid(x as i64 + dx, y as i64 + dy);
                if v != 0 {
                    buf.push(v);
                }
            }
        }
        if buf.is_empty() {
            return 0;
        }
        let mid = (buf.len() - 1) / 2;
        *buf.select_nth_unstable(mid).1
    })
}

/// Expected on-screen hand size for a surface at depth `d` mm.
pub fn window_side(camera: &PinholeCamera, hand_size: f64, d: f64) -> f64 {
    hand_size * camera.fx / d
}

/// Per-pixel expected window side; `None` where depth is invalid or beyond
/// `max_range`.
pub fn scale_map(depth: &DepthImage, camera: &PinholeCamera, hand_size: f64, max_range: f64) -> Vec<Option<f64>> {
    depth
        .as_slice()
        .iter()
        .map(|&d| {
            let d = f64::from(d);
            (d > 0.0 && d <= max_range).then(|| window_side(camera, hand_size, d))
        })
        .collect()
}

/// A scanning location with its depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: usize,
    pub y: usize,
    pub depth: f64,
}

impl GridPoint {
    /// Square window of side `side` centred on this location.
    pub fn window(&self, side: f64) -> BoundingBox {
        BoundingBox::square(self.x as f64, self.y as f64, side)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScan {
    pub points: Vec<GridPoint>,
    /// Grid locations considered before pruning.
    pub considered: usize,
}

impl GridScan {
    pub fn pruned_fraction(&self) -> f64 {
        if self.considered == 0 {
            0.0
        } else {
            1.0 - self.points.len() as f64 / self.considered as f64
        }
    }
}

fn grid(depth: &DepthImage, stride: usize, phase: usize, keep: impl Fn(f64) -> bool) -> GridScan {
    let mut points = Vec::new();
    let mut considered = 0;
    for y in (phase..depth.height()).step_by(stride) {
        for x in (phase..depth.width()).step_by(stride) {
            considered += 1;
            let d = f64::from(depth.get(x, y));
            if d > 0.0 && keep(d) {
                points.push(GridPoint { x, y, depth: d });
            }
        }
    }
    GridScan { points, considered }
}

/// Grid points at `stride/2 + k*stride` with valid depth within `max_range`.
pub fn valid_grid(depth: &DepthImage, cfg: &ScanConfig) -> GridScan {
    grid(depth, cfg.stride, cfg.stride / 2, |d| d <= cfg.max_range)
}

/// Every location of a `stride` grid with valid depth, no range pruning.
/// The phase is aligned with the sparse grid of `sparse_stride`, so when
/// `sparse_stride` is a multiple of `stride` the sparse points are a subset.
pub fn dense_grid(depth: &DepthImage, stride: usize, sparse_stride: usize) -> GridScan {
    let stride = stride.max(1);
    grid(depth, stride, (sparse_stride / 2) % stride, |_| true)
}

/// Reference depth for a window centred at `(x, y)`: the pixel itself when
/// valid and in range, otherwise the lower median of valid in-range depths in
/// the surrounding `(2r+1)^2` patch.
pub fn window_depth(depth: &DepthImage, x: f64, y: f64, max_range: f64, radius: usize) -> Option<f64> {
    let px = x.round() as i64;
    let py = y.round() as i64;
    let ok = |v: u16| v != 0 && f64::from(v) <= max_range;
    let center = depth.get_or_invalid(px, py);
    if ok(center) {
        return Some(f64::from(center));
    }
    let r = radius as i64;
    let mut vals: Vec<u16> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| depth.get_or_invalid(px + dx, py + dy))
        .filter(|&v| ok(v))
        .collect();
    if vals.is_empty() {
        return None;
    }
    let mid = (vals.len() - 1) / 2;
    Some(f64::from(*vals.select_nth_unstable(mid).1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_median(depth: &DepthImage, r: usize) -> DepthImage {
        let r = r as i64;
        DepthImage::from_fn(depth.width(), depth.height(), |x, y| {
            let mut v = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = (x as i64 + dx, y as i64 + dy);
                    if xx >= 0 && yy >= 0 && (xx as usize) < depth.width() && (yy as usize) < depth.height() {
                        let s = depth.get(xx as usize, yy as usize);
                        if s != 0 {
                            v.push(s);
                        }
                    }
                }
            }
            v.sort();
            if v.is_empty() {
                0
            } else {
                v[(v.len() - 1) / 2]
            }
        })
    }

    #[test]
    fn median_keeps_constant_images() {
        let img = DepthImage::filled(17, 9, 612);
        assert_eq!(median_filter(&img, 2), img);
    }

    #[test]
    fn median_removes_a_spike() {
        let mut img = DepthImage::filled(9, 9, 500);
        img.set(4, 4, 3000);
        assert_eq!(median_filter(&img, 1).get(4, 4), 500);
    }

    #[test]
    fn median_matches_sort_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..50 {
            let (w, h) = (rng.random_range(1..24), rng.random_range(1..24));
            let img = DepthImage::from_fn(w, h, |_, _| {
                if rng.random::<f64>() < 0.2 {
                    0
                } else {
                    rng.random_range(200..1200)
                }
            });
            let r = trial % 3;
            assert_eq!(median_filter(&img, r), naive_median(&img, r), "trial {trial}");
        }
    }

    #[test]
    fn all_invalid_neighbourhood_stays_invalid() {
        let img = DepthImage::new(5, 5);
        assert_eq!(median_filter(&img, 1), img);
    }

    #[test]
    fn scale_map_pinhole_arithmetic() {
        let cam = PinholeCamera::new(500.0, 500.0, 1.5, 0.5, 4, 2).unwrap();
        let img = DepthImage::from_vec(4, 2, vec![500, 250, 0, 800, 500, 500, 500, 500]).unwrap();
        let m = scale_map(&img, &cam, 100.0, 750.0);
        assert_eq!(m[0], Some(100.0));
        assert_eq!(m[1], Some(200.0));
        assert_eq!(m[2], None);
        assert_eq!(m[3], None);
    }

    #[test]
    fn background_only_frame_has_empty_grid() {
        let img = DepthImage::filled(320, 240, 900);
        let g = valid_grid(&img, &ScanConfig::default());
        assert!(g.points.is_empty());
        assert_eq!(g.considered, 300);
        assert_eq!(g.pruned_fraction(), 1.0);
    }

    #[test]
    fn grid_size_bound() {
        let img = DepthImage::filled(320, 240, 400);
        let g = valid_grid(&img, &ScanConfig::default());
        assert_eq!(g.points.len(), 300);
        assert_eq!((g.points[0].x, g.points[0].y), (8, 8));
    }

    #[test]
    fn dense_grid_contains_sparse_points() {
        let img = DepthImage::from_fn(320, 240, |x, _| if x < 100 { 500 } else { 1000 });
        let sparse = valid_grid(&img, &ScanConfig::default());
        let dense = dense_grid(&img, 4, 16);
        for p in &sparse.points {
            assert!(dense.points.contains(p));
        }
        assert!(dense.points.len() > sparse.points.len());
    }

    #[test]
    fn window_depth_falls_back_to_neighbourhood() {
        let mut img = DepthImage::filled(9, 9, 900);
        img.set(3, 4, 400);
        img.set(5, 4, 420);
        img.set(4, 5, 410);
        assert_eq!(window_depth(&img, 4.0, 4.0, 750.0, 1), Some(410.0));
        img.set(4, 4, 380);
        assert_eq!(window_depth(&img, 4.0, 4.0, 750.0, 1), Some(380.0));
        assert_eq!(window_depth(&DepthImage::filled(3, 3, 900), 1.0, 1.0, 750.0, 1), None);
    }
}
