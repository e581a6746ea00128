use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, SCORED_KEYPOINTS};

/// Length of a canonical label vector.
pub const LABEL_DIM: usize = 2 * SCORED_KEYPOINTS;

/// Keypoints relative to the box centre, divided by the longer box side,
/// flattened as `[u0, v0, u1, v1, ...]`.
pub fn canonical_label(keypoints: &[[f64; 2]], bbox: &BoundingBox) -> Result<Vec<f64>> {
    if !(bbox.w > 0.0 && bbox.h > 0.0) {
        return Err(Error::invalid(format!("box {bbox:?} has zero area")));
    }
    if keypoints.len() != SCORED_KEYPOINTS {
        return Err(Error::invalid(format!(
            "expected {SCORED_KEYPOINTS} keypoints, got {}",
            keypoints.len()
        )));
    }
    let (cx, cy) = bbox.center();
    let scale = bbox.w.max(bbox.h);
    Ok(keypoints
        .iter()
        .flat_map(|[u, v]| [(u - cx) / scale, (v - cy) / scale])
        .collect())
}

/// Inverse of [`canonical_label`]: places a label inside `bbox`.
pub fn denormalize(label: &[f64], bbox: &BoundingBox) -> Vec<[f64; 2]> {
    let (cx, cy) = bbox.center();
    let scale = bbox.w.max(bbox.h);
    label
        .chunks_exact(2)
        .map(|p| [cx + p[0] * scale, cy + p[1] * scale])
        .collect()
}
