//! Wall-clock comparison of the implicit ensemble against explicit sampled
//! cascades, and of the sparse scan against a dense grid.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cascade::{classify_ensemble, classify_oracle, sample_instantiations, CascadeModel, OracleMode};
use crate::detect::{detect_top_n, median_filter, valid_grid, window_side, ScanConfig, ScanMode};
use crate::error::{Error, Result};
use crate::features::extract;
use crate::geometry::DepthImage;

/// Published speed-up of the implicit ensemble over 100 explicit cascades.
pub const REFERENCE_ENSEMBLE_SPEEDUP: f64 = 2.5;
/// Published speed-up of the sparse scan over a dense grid.
pub const REFERENCE_SCAN_SPEEDUP: f64 = 3.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Frames used by both benchmarks.
    pub frames: usize,
    /// Fewest frames a run accepts.
    pub min_frames: usize,
    pub repetitions: usize,
    /// Explicit cascades drawn for the ensemble comparison.
    pub instantiations: usize,
    /// Most windows classified per repetition of the ensemble comparison.
    pub windows: usize,
    /// Grid spacing of the dense scan, px.
    pub dense_stride: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            frames: 10,
            min_frames: 3,
            repetitions: 5,
            instantiations: 100,
            windows: 400,
            dense_stride: 4,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.min_frames == 0 || self.repetitions == 0 {
            return Err(Error::invalid("frames, min_frames and repetitions must be positive"));
        }
        if self.instantiations == 0 || self.windows == 0 || self.dense_stride == 0 {
            return Err(Error::invalid(
                "instantiations, windows and dense_stride must be positive",
            ));
        }
        Ok(())
    }
}

/// Wall times of one workload over the repetitions, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: Vec<f64>,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Timing {
    pub fn new(seconds: Vec<f64>) -> Self {
        Self {
            median: median(&seconds),
            min: seconds.iter().copied().fold(f64::INFINITY, f64::min),
            max: seconds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            seconds,
        }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Baseline time over candidate time, per repetition and summarised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub baseline: Timing,
    pub candidate: Timing,
    pub ratios: Vec<f64>,
    pub ratio_median: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub reference: f64,
}

impl Speedup {
    fn new(baseline: Vec<f64>, candidate: Vec<f64>, reference: f64) -> Self {
        let ratios: Vec<f64> = baseline.iter().zip(&candidate).map(|(b, c)| b / c).collect();
        Self {
            ratio_median: median(&ratios),
            ratio_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratio_max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ratios,
            baseline: Timing::new(baseline),
            candidate: Timing::new(candidate),
            reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleBench {
    /// Explicit sampled cascades (baseline) against the implicit ensemble.
    pub speedup: Speedup,
    pub windows: usize,
    pub instantiations: usize,
    /// Mean tree nodes visited per window by the implicit ensemble.
    pub mean_visited: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanBench {
    /// Dense grid (baseline) against the sparse scan.
    pub speedup: Speedup,
    pub dense_stride: usize,
    pub sparse_windows: usize,
    pub dense_windows: usize,
    /// Dense over sparse window count.
    pub window_ratio: f64,
    /// The window ratio bounds the slowest measured time ratio from above.
    pub counts_consistent: bool,
    /// Mean fraction of pixels with a valid depth within range.
    pub in_range_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: usize,
    pub repetitions: usize,
    pub ensemble: EnsembleBench,
    pub scan: ScanBench,
    pub config: BenchConfig,
}

impl BenchReport {
    /// Human-readable summary with the measured and published ratios.
    pub fn summary(&self) -> String {
        let e = &self.ensemble.speedup;
        let s = &self.scan.speedup;
        format!(
            "implicit ensemble vs {} explicit cascades: {:.2}x (min {:.2}, max {:.2}; published {:.2}x)\n\
             sparse vs dense stride-{} scan: {:.2}x (min {:.2}, max {:.2}; published {:.2}x), \
             windows {} vs {}, in-range pixels {:.1}%\n\
             {} frames, {} repetitions",
            self.ensemble.instantiations,
            e.ratio_median,
            e.ratio_min,
            e.ratio_max,
            e.reference,
            self.scan.dense_stride,
            s.ratio_median,
            s.ratio_min,
            s.ratio_max,
            s.reference,
            self.scan.sparse_windows,
            self.scan.dense_windows,
            100.0 * self.scan.in_range_fraction,
            self.frames,
            self.repetitions
        )
    }
}

/// Descriptors of the sparse-scan windows of `frames`, at most `limit`.
fn scan_descriptors(
    frames: &[DepthImage],
    model: &CascadeModel,
    scan: &ScanConfig,
    limit: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for frame in frames {
        let filtered = median_filter(frame, scan.median_radius);
        for p in valid_grid(&filtered, scan).points {
            if out.len() == limit {
                return Ok(out);
            }
            let window = p.window(window_side(&model.camera, scan.hand_size, p.depth));
            out.push(extract(&filtered, &window, p.depth, &model.feature)?.values);
        }
    }
    Ok(out)
}

fn time<F: FnMut() -> Result<()>>(mut f: F) -> Result<f64> {
    let t = Instant::now();
    f()?;
    Ok(t.elapsed().as_secs_f64())
}

/// Runs both comparisons on `frames`.
pub fn run_bench(
    model: &CascadeModel,
    frames: &[DepthImage],
    scan: &ScanConfig,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    cfg.validate()?;
    scan.validate()?;
    if frames.len() < cfg.min_frames {
        return Err(Error::invalid(format!(
            "benchmark needs at least {} frames, got {}",
            cfg.min_frames,
            frames.len()
        )));
    }
    let frames = &frames[..frames.len().min(cfg.frames)];

    let xs = scan_descriptors(frames, model, scan, cfg.windows)?;
    if xs.is_empty() {
        return Err(Error::invalid("no in-range windows to benchmark"));
    }
    let mode = OracleMode::Sampled(sample_instantiations(model, cfg.instantiations, cfg.seed));
    let mut implicit = Vec::new();
    let mut explicit = Vec::new();
    let mut visited = 0usize;
    for _ in 0..cfg.repetitions {
        explicit.push(time(|| {
            for x in &xs {
                black_box(classify_oracle(black_box(x), model, &mode)?);
            }
            Ok(())
        })?);
        visited = 0;
        implicit.push(time(|| {
            for x in &xs {
                visited += black_box(classify_ensemble(black_box(x), model)).visited;
            }
            Ok(())
        })?);
    }
    log::info!(
        "ensemble benchmark: {} windows, {} repetitions",
        xs.len(),
        cfg.repetitions
    );

    let mut sparse = Vec::new();
    let mut dense = Vec::new();
    let (mut sparse_windows, mut dense_windows) = (0, 0);
    let dense_mode = ScanMode::Dense {
        stride: cfg.dense_stride,
    };
    for _ in 0..cfg.repetitions {
        let (mut sw, mut dw) = (0, 0);
        dense.push(time(|| {
            for f in frames {
                dw += black_box(detect_top_n(f, model, scan, dense_mode)?).windows;
            }
            Ok(())
        })?);
        sparse.push(time(|| {
            for f in frames {
                sw += black_box(detect_top_n(f, model, scan, ScanMode::Sparse)?).windows;
            }
            Ok(())
        })?);
        sparse_windows = sw;
        dense_windows = dw;
    }
    let in_range = frames
        .iter()
        .map(|f| median_filter(f, scan.median_radius).in_range_fraction(scan.max_range))
        .sum::<f64>()
        / frames.len() as f64;
    let scan_speedup = Speedup::new(dense, sparse, REFERENCE_SCAN_SPEEDUP);
    let window_ratio = dense_windows as f64 / sparse_windows.max(1) as f64;
    Ok(BenchReport {
        frames: frames.len(),
        repetitions: cfg.repetitions,
        ensemble: EnsembleBench {
            speedup: Speedup::new(explicit, implicit, REFERENCE_ENSEMBLE_SPEEDUP),
            windows: xs.len(),
            instantiations: cfg.instantiations,
            mean_visited: visited as f64 / xs.len() as f64,
        },
        scan: ScanBench {
            counts_consistent: window_ratio >= scan_speedup.ratio_min,
            speedup: scan_speedup,
            dense_stride: cfg.dense_stride,
            sparse_windows,
            dense_windows,
            window_ratio,
            in_range_fraction: in_range,
        },
        config: *cfg,
    })
}
