//! Sparse scanning-window detection over depth frames.

mod detector;
mod scan;

pub use detector::{
    candidate_order, classify_location, detect_top_n, non_max_suppression, refine_candidate, Candidate, Detection,
    ScanMode,
};
pub use scan::{
    dense_grid, median_filter, scale_map, valid_grid, window_depth, window_side, GridPoint, GridScan, ScanConfig,
};
