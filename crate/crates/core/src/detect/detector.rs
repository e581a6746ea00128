use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scan::{dense_grid, median_filter, valid_grid, window_depth, window_side, GridPoint, ScanConfig};
use crate::cascade::{classify_ensemble, rank_order, CascadeModel, RankedClass};
use crate::error::Result;
use crate::features::extract;
use crate::geometry::{BoundingBox, DepthImage};
use crate::synth::denormalize;

/// One pose hypothesis at one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Window clipped to the image.
    pub bbox: BoundingBox,
    /// The classified window, possibly extending past the image.
    pub window: BoundingBox,
    pub class: usize,
    pub votes: u64,
    pub margin: f64,
    /// Class template drawn into the (unclipped) window.
    pub keypoints: Vec<[f64; 2]>,
}

impl Candidate {
    fn rank(&self) -> RankedClass {
        RankedClass {
            class: self.class,
            votes: self.votes,
            margin: self.margin,
        }
    }
}

/// Candidate ordering: votes, then margin, then class id, then position.
pub fn candidate_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    rank_order(&a.rank(), &b.rank())
        .then(a.bbox.y.total_cmp(&b.bbox.y))
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
}

/// Detector output for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub candidates: Vec<Candidate>,
    /// Grid locations before and after range pruning.
    pub considered: usize,
    pub locations: usize,
    /// Windows classified (locations times scales).
    pub windows: usize,
}

/// Which locations to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMode {
    /// Stride grid restricted to in-range depth.
    Sparse,
    /// Every valid pixel on a finer grid, no range pruning.
    Dense { stride: usize },
}

/// Greedy suppression in ranking order. With `per_class` only candidates of
/// the same class suppress each other.
pub fn non_max_suppression(mut candidates: Vec<Candidate>, iou: f64, per_class: bool, keep: usize) -> Vec<Candidate> {
    candidates.sort_by(candidate_order);
    let mut out: Vec<Candidate> = Vec::new();
    for c in candidates {
        if out.len() == keep {
            break;
        }
        let clash = out
            .iter()
            .any(|k| (!per_class || k.class == c.class) && k.bbox.iou(&c.bbox) > iou);
        if !clash {
            out.push(c);
        }
    }
    out
}

/// Classifies the window at one location and returns its best classes.
pub fn classify_location(
    filtered: &DepthImage,
    point: &GridPoint,
    scale: f64,
    model: &CascadeModel,
    cfg: &ScanConfig,
) -> Result<Vec<Candidate>> {
    let side = window_side(&model.camera, cfg.hand_size, point.depth) * scale;
    let window = point.window(side);
    let x = extract(filtered, &window, point.depth, &model.feature)?;
    let votes = classify_ensemble(&x.values, model);
    let clipped = window.clip(filtered.width(), filtered.height());
    Ok(votes
        .ranked()
        .into_iter()
        .take(cfg.alternates)
        .map(|r| Candidate {
            bbox: clipped,
            window,
            class: r.class,
            votes: r.votes,
            margin: r.margin,
            keypoints: denormalize(&model.templates[r.class], &window),
        })
        .collect())
}

/// Locations on a `refine_step` lattice within `refine_radius` of the
/// `refine_top` best-ranked scanned windows, each at its own scale.
fn refinement_jobs(
    filtered: &DepthImage,
    jobs: &[(GridPoint, f64)],
    found: &[Vec<Candidate>],
    cfg: &ScanConfig,
) -> Vec<(GridPoint, f64)> {
    if cfg.refine_radius == 0 {
        return Vec::new();
    }
    let mut best: Vec<(usize, &Candidate)> = found
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.first().map(|c| (i, c)))
        .collect();
    best.sort_by(|a, b| candidate_order(a.1, b.1));
    let r = cfg.refine_radius as i64;
    let step = cfg.refine_step;
    let mut seen: std::collections::BTreeSet<(usize, usize, u64)> =
        jobs.iter().map(|(p, s)| (p.x, p.y, s.to_bits())).collect();
    let mut out = Vec::new();
    for &(i, _) in best.iter().take(cfg.refine_top) {
        let (p, scale) = jobs[i];
        for dy in (-r..=r).step_by(step) {
            for dx in (-r..=r).step_by(step) {
                let x = p.x as i64 + dx;
                let y = p.y as i64 + dy;
                if x < 0 || y < 0 || x >= filtered.width() as i64 || y >= filtered.height() as i64 {
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                let d = f64::from(filtered.get(x, y));
                if d == 0.0 || d > cfg.max_range || !seen.insert((x, y, scale.to_bits())) {
                    continue;
                }
                out.push((GridPoint { x, y, depth: d }, scale));
            }
        }
    }
    out
}

/// Moves a candidate's window onto the hand with the model's refiner and
/// redraws its template there.
pub fn refine_candidate(
    filtered: &DepthImage,
    c: &Candidate,
    model: &CascadeModel,
    cfg: &ScanConfig,
) -> Result<Candidate> {
    let Some(refiner) = &model.refiner else {
        return Ok(c.clone());
    };
    let (cx, cy) = c.window.center();
    let Some(depth) = window_depth(filtered, cx, cy, cfg.max_range, cfg.stride / 2) else {
        return Ok(c.clone());
    };
    let (window, side) = refiner.refine(
        filtered,
        c.window,
        depth,
        c.class,
        &model.feature,
        cfg.regress_iterations,
        cfg.max_range,
    )?;
    let (cx, cy) = window.center();
    Ok(Candidate {
        bbox: window.clip(filtered.width(), filtered.height()),
        window,
        keypoints: denormalize(&model.templates[c.class], &BoundingBox::square(cx, cy, side)),
        ..c.clone()
    })
}

/// Scans a frame and returns at most `cfg.top_n` candidates after
/// suppression, in ranking order.
pub fn detect_top_n(frame: &DepthImage, model: &CascadeModel, cfg: &ScanConfig, mode: ScanMode) -> Result<Detection> {
    cfg.validate()?;
    let filtered = median_filter(frame, cfg.median_radius);
    let grid = match mode {
        ScanMode::Sparse => valid_grid(&filtered, cfg),
        ScanMode::Dense { stride } => dense_grid(&filtered, stride, cfg.stride),
    };
    let scales = cfg.scales();
    let jobs: Vec<(GridPoint, f64)> = grid
        .points
        .iter()
        .flat_map(|p| scales.iter().map(move |&s| (*p, s)))
        .collect();
    let found: Vec<Vec<Candidate>> = jobs
        .par_iter()
        .map(|(p, s)| classify_location(&filtered, p, *s, model, cfg))
        .collect::<Result<_>>()?;
    let refine = refinement_jobs(&filtered, &jobs, &found, cfg);
    let refined: Vec<Vec<Candidate>> = refine
        .par_iter()
        .map(|(p, s)| classify_location(&filtered, p, *s, model, cfg))
        .collect::<Result<_>>()?;
    let all: Vec<Candidate> = found.into_iter().chain(refined).flatten().collect();
    let candidates = if model.refiner.is_some() && cfg.regress_iterations > 0 {
        let pool = non_max_suppression(all, cfg.nms_iou, cfg.per_class_nms, 2 * cfg.top_n);
        let moved: Vec<Candidate> = pool
            .par_iter()
            .map(|c| refine_candidate(&filtered, c, model, cfg))
            .collect::<Result<_>>()?;
        non_max_suppression(moved, cfg.nms_iou, cfg.per_class_nms, cfg.top_n)
    } else {
        non_max_suppression(all, cfg.nms_iou, cfg.per_class_nms, cfg.top_n)
    };
    Ok(Detection {
        candidates,
        considered: grid.considered,
        locations: grid.points.len(),
        windows: jobs.len() + refine.len(),
    })
}
