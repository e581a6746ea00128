//! Detection, viewpoint-consistency, conditional RMSE and fingertip metrics
//! over N-candidate lists.

mod metrics;

pub use metrics::{
    evaluate, fingertip_accuracy, iou, rmse2d, viewpoint_consistent, EvalConfig, FrameDetections, GroundTruth,
    MetricRow, MetricsTable, FINGERTIPS,
};
