//! HOG-D: histograms of signed depth-gradient orientation over a square
//! window, plus the part regions that weak classifiers look at.
//!
//! Layout of a descriptor of dimension `D = cells_y * cells_x * bins + 1`:
//! entry `((cy * cells_x) + cx) * bins + b` holds orientation bin `b` of the
//! cell in row `cy`, column `cx`; the last entry is a constant 1 (bias).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, DepthImage};

/// Human-readable statement of the flattening order, stored in model files.
pub const FEATURE_LAYOUT: &str = "cell-major (row cy, column cx), then signed orientation bin; bias last";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    /// Side of the resampled window, px.
    pub window: usize,
    /// Side of one histogram cell, px.
    pub cell: usize,
    /// Signed orientation bins over a full turn.
    pub bins: usize,
    /// Depths relative to the window centre are clipped to `[-clip, clip]`, mm.
    pub clip: f64,
    pub epsilon: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window: 60,
            cell: 12,
            bins: 16,
            clip: 250.0,
            epsilon: 1.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cell == 0 || self.window == 0 || !self.window.is_multiple_of(self.cell) {
            return Err(Error::invalid(format!(
                "window side {} must be a positive multiple of cell side {}",
                self.window, self.cell
            )));
        }
        if self.window / self.cell < 2 {
            return Err(Error::invalid("window must span at least 2 cells"));
        }
        if self.bins < 2 {
            return Err(Error::invalid("need at least 2 orientation bins"));
        }
        if !(self.clip > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::invalid("clip and epsilon must be positive"));
        }
        Ok(())
    }

    /// Cells per side.
    pub fn cells(&self) -> usize {
        self.window / self.cell
    }

    /// Descriptor length including the bias entry.
    pub fn dim(&self) -> usize {
        self.cells() * self.cells() * self.bins + 1
    }
}

/// A HOG-D descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub cells_x: usize,
    pub cells_y: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl FeatureGrid {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn index(&self, cx: usize, cy: usize, bin: usize) -> usize {
        (cy * self.cells_x + cx) * self.bins + bin
    }

    pub fn bias_index(&self) -> usize {
        self.values.len() - 1
    }

    /// L2 norm of the histogram part (bias excluded).
    pub fn histogram_norm(&self) -> f64 {
        self.values[..self.bias_index()]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Cell-aligned rectangle of the descriptor grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartRegion {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl PartRegion {
    pub fn full(cells: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            w: cells,
            h: cells,
        }
    }

    pub fn validate(&self, cells_x: usize, cells_y: usize) -> Result<()> {
        if self.w < 2 || self.h < 2 {
            return Err(Error::invalid(format!("part region {self:?} smaller than 2x2 cells")));
        }
        if self.x0 + self.w > cells_x || self.y0 + self.h > cells_y {
            return Err(Error::invalid(format!(
                "part region {self:?} outside the {cells_x}x{cells_y} cell grid"
            )));
        }
        Ok(())
    }

    pub fn contains_cell(&self, cx: usize, cy: usize) -> bool {
        cx >= self.x0 && cx < self.x0 + self.w && cy >= self.y0 && cy < self.y0 + self.h
    }

    /// Contiguous descriptor index ranges covered by the region, one per cell row.
    pub fn spans(&self, cells_x: usize, bins: usize) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (self.y0..self.y0 + self.h).map(move |cy| {
            let start = (cy * cells_x + self.x0) * bins;
            start..start + self.w * bins
        })
    }

    /// Descriptor indices covered by the region, in increasing order.
    pub fn indices(&self, cells_x: usize, bins: usize) -> Vec<usize> {
        self.spans(cells_x, bins).flatten().collect()
    }
}

/// Copies the region's entries and the bias; everything else is zero.
pub fn part_vector(grid: &FeatureGrid, region: &PartRegion) -> Result<Vec<f64>> {
    region.validate(grid.cells_x, grid.cells_y)?;
    let mut out = vec![0.0; grid.dim()];
    for span in region.spans(grid.cells_x, grid.bins) {
        out[span.clone()].copy_from_slice(&grid.values[span]);
    }
    let b = grid.bias_index();
    out[b] = grid.values[b];
    Ok(out)
}

/// `weights . part_vector(values, region)` without materialising the part.
pub fn region_dot(weights: &[f64], values: &[f64], region: &PartRegion, cells_x: usize, bins: usize) -> f64 {
    let mut acc = 0.0;
    for span in region.spans(cells_x, bins) {
        acc += weights[span.clone()]
            .iter()
            .zip(&values[span])
            .map(|(w, x)| w * x)
            .sum::<f64>();
    }
    let b = values.len() - 1;
    acc + weights[b] * values[b]
}

/// Nearest-neighbour resampling of `window` to a `side` x `side` crop.
/// Samples falling outside the image are invalid (0).
pub fn crop_window(depth: &DepthImage, window: &BoundingBox, side: usize) -> DepthImage {
    let sx = window.w / side as f64;
    let sy = window.h / side as f64;
    DepthImage::from_fn(side, side, |i, j| {
        let u = (window.x + (i as f64 + 0.5) * sx).round();
        let v = (window.y + (j as f64 + 0.5) * sy).round();
        depth.get_or_invalid(u as i64, v as i64)
    })
}

/// HOG-D descriptor of a square crop whose side equals `cfg.window`.
///
/// Depths are taken relative to `center_depth` and clipped; gradients are
/// central differences and any pixel with an invalid sample among itself and
/// its four neighbours is skipped. Each gradient votes its magnitude into the
/// two nearest orientation bins and, bilinearly, into the four nearest cells.
pub fn compute_hogd(crop: &DepthImage, center_depth: f64, cfg: &FeatureConfig) -> Result<FeatureGrid> {
    cfg.validate()?;
    if crop.width() != cfg.window || crop.height() != cfg.window {
        return Err(Error::invalid(format!(
            "crop is {}x{}, expected {}x{}",
            crop.width(),
            crop.height(),
            cfg.window,
            cfg.window
        )));
    }
    if !center_depth.is_finite() {
        return Err(Error::invalid("centre depth must be finite"));
    }
    let side = cfg.window;
    let cells = cfg.cells();
    let bins = cfg.bins;
    let bin_width = TAU / bins as f64;
    let mut values = vec![0.0; cfg.dim()];

    let rel: Vec<Option<f64>> = crop
        .as_slice()
        .iter()
        .map(|&d| (d != 0).then(|| (f64::from(d) - center_depth).clamp(-cfg.clip, cfg.clip)))
        .collect();
    let at = |x: usize, y: usize| rel[y * side + x];

    for y in 1..side - 1 {
        for x in 1..side - 1 {
            let (Some(_), Some(l), Some(r), Some(u), Some(d)) =
                (at(x, y), at(x - 1, y), at(x + 1, y), at(x, y - 1), at(x, y + 1))
            else {
                continue;
            };
            let gx = (r - l) / 2.0;
            let gy = (d - u) / 2.0;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(TAU);
            let pos = angle / bin_width - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let b0 = (lo as i64).rem_euclid(bins as i64) as usize;
            let b1 = (b0 + 1) % bins;

            let fx = (x as f64 + 0.5) / cfg.cell as f64 - 0.5;
            let fy = (y as f64 + 0.5) / cfg.cell as f64 - 0.5;
            let cx0 = fx.floor();
            let cy0 = fy.floor();
            let ax = fx - cx0;
            let ay = fy - cy0;
            for (dy, wy) in [(0i64, 1.0 - ay), (1, ay)] {
                let cy = cy0 as i64 + dy;
                if cy < 0 || cy >= cells as i64 || wy == 0.0 {
                    continue;
                }
                for (dx, wx) in [(0i64, 1.0 - ax), (1, ax)] {
                    let cx = cx0 as i64 + dx;
                    if cx < 0 || cx >= cells as i64 || wx == 0.0 {
                        continue;
                    }
                    let base = (cy as usize * cells + cx as usize) * bins;
                    let w = mag * wx * wy;
                    values[base + b0] += w * (1.0 - frac);
                    values[base + b1] += w * frac;
                }
            }
        }
    }

    let n = values.len() - 1;
    let norm = (values[..n].iter().map(|v| v * v).sum::<f64>() + cfg.epsilon * cfg.epsilon).sqrt();
    values[..n].iter_mut().for_each(|v| *v /= norm);
    values[n] = 1.0;
    Ok(FeatureGrid {
        cells_x: cells,
        cells_y: cells,
        bins,
        values,
    })
}

/// Crops `window` out of `depth`, resamples it and computes its descriptor.
pub fn extract(
    depth: &DepthImage,
    window: &BoundingBox,
    center_depth: f64,
    cfg: &FeatureConfig,
) -> Result<FeatureGrid> {
    compute_hogd(&crop_window(depth, window, cfg.window), center_depth, cfg)
}
