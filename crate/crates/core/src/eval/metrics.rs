use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::Candidate;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::synth::Sample;

/// Scored-keypoint indices of the five fingertips.
pub const FINGERTIPS: [usize; 5] = [3, 7, 11, 15, 19];

/// Intersection over union of two boxes with positive area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    if !(a.area() > 0.0) || !(b.area() > 0.0) {
        return Err(Error::invalid("IoU needs boxes with positive area"));
    }
    Ok(a.iou(b))
}

/// Root-mean-square distance between corresponding points.
pub fn rmse2d(predicted: &[[f64; 2]], truth: &[[f64; 2]]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid(format!(
            "keypoint counts differ or are zero: {} vs {}",
            predicted.len(),
            truth.len()
        )));
    }
    let sum: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum();
    Ok((sum / truth.len() as f64).sqrt())
}

pub fn viewpoint_consistent(predicted: &[[f64; 2]], truth: &[[f64; 2]], threshold: f64) -> Result<bool> {
    Ok(rmse2d(predicted, truth)? <= threshold)
}

/// Fraction of visible ground-truth fingertips with a predicted fingertip
/// within `radius`, pairing closest pairs first and each tip at most once.
/// `None` when no fingertip is visible.
pub fn fingertip_accuracy(predicted: &[[f64; 2]], truth: &[[f64; 2]], visible: &[bool], radius: f64) -> Option<f64> {
    let gt: Vec<usize> = FINGERTIPS.iter().copied().filter(|&i| visible[i]).collect();
    if gt.is_empty() {
        return None;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, &g) in gt.iter().enumerate() {
        for (pi, &p) in FINGERTIPS.iter().enumerate() {
            let d = ((predicted[p][0] - truth[g][0]).powi(2) + (predicted[p][1] - truth[g][1]).powi(2)).sqrt();
            pairs.push((d, gi, pi));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_g = vec![false; gt.len()];
    let mut used_p = [false; 5];
    let mut hits = 0;
    for (d, gi, pi) in pairs {
        if d > radius {
            break;
        }
        if !used_g[gi] && !used_p[pi] {
            used_g[gi] = true;
            used_p[pi] = true;
            hits += 1;
        }
    }
    Some(hits as f64 / gt.len() as f64)
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame: usize,
    pub bbox: BoundingBox,
    pub keypoints: Vec<[f64; 2]>,
    /// Visibility of the scored keypoints.
    pub visible: Vec<bool>,
}

impl GroundTruth {
    pub fn from_sample(s: &Sample) -> Self {
        Self {
            frame: s.id,
            bbox: s.bbox,
            keypoints: s.keypoints_2d.clone(),
            visible: s.scored_visibility().to_vec(),
        }
    }
}

/// Candidates reported for one frame, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame: usize,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Candidate-list lengths to score.
    pub n_list: Vec<usize>,
    /// Viewpoint-consistency RMSE threshold, px.
    pub threshold: f64,
    /// Thresholds for the pixel-threshold sweep, px.
    pub sweep: Vec<f64>,
    /// List length used by the sweep.
    pub sweep_n: usize,
    pub fingertip_radius: f64,
    pub min_iou: f64,
    /// Image size the ground-truth boxes are clipped to.
    pub width: usize,
    pub height: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_list: vec![1, 2, 5, 10, 20],
            threshold: 10.0,
            sweep: (1..=20).map(f64::from).collect(),
            sweep_n: 10,
            fingertip_radius: 10.0,
            min_iou: 0.5,
            width: 320,
            height: 240,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) || self.sweep_n == 0 {
            return Err(Error::invalid("candidate counts must be positive"));
        }
        if !(self.threshold >= 0.0) || !(self.fingertip_radius >= 0.0) || self.sweep.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::invalid("pixel thresholds must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.min_iou) {
            return Err(Error::invalid("IoU threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub param: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
    pub frames: usize,
    /// Ground-truth frames without detections, excluded from every rate.
    pub missing_frames: Vec<usize>,
    /// Rows left out because they were undefined, with the reason.
    pub omitted: Vec<String>,
}

impl MetricsTable {
    pub fn get(&self, metric: &str, param: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.param == param)
            .map(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,param,value\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.metric, r.param, r.value));
        }
        s
    }
}

/// Per-candidate scores against one frame's ground truth.
struct Scored {
    votes: u64,
    iou: f64,
    rmse: f64,
    tips: Option<f64>,
}

fn score_frame(gt: &GroundTruth, det: &FrameDetections, cfg: &EvalConfig) -> Result<Vec<Scored>> {
    let gt_box = gt.bbox.clip(cfg.width, cfg.height);
    det.candidates
        .iter()
        .map(|c| {
            Ok(Scored {
                votes: c.votes,
                iou: if c.bbox.area() > 0.0 {
                    iou(&c.bbox, &gt_box)?
                } else {
                    0.0
                },
                rmse: rmse2d(&c.keypoints, &gt.keypoints)?,
                tips: fingertip_accuracy(&c.keypoints, &gt.keypoints, &gt.visible, cfg.fingertip_radius),
            })
        })
        .collect()
}

/// Best (lowest-RMSE) candidate among the first `n`, ties to the earlier one.
fn best_pose(scored: &[Scored], n: usize) -> Option<&Scored> {
    scored[..n.min(scored.len())]
        .iter()
        .fold(None, |best: Option<&Scored>, s| match best {
            Some(b) if b.rmse <= s.rmse => Some(b),
            _ => Some(s),
        })
}

/// Scores detections against ground truth for every list length in
/// `cfg.n_list`, sweeps the consistency threshold and traces a
/// precision-recall curve over vote thresholds.
pub fn evaluate(truth: &[GroundTruth], detections: &[FrameDetections], cfg: &EvalConfig) -> Result<MetricsTable> {
    cfg.validate()?;
    let by_frame: BTreeMap<usize, &FrameDetections> = detections.iter().map(|d| (d.frame, d)).collect();
    let mut missing = Vec::new();
    let mut present = Vec::new();
    for gt in truth {
        match by_frame.get(&gt.frame) {
            Some(d) => present.push((gt, *d)),
            None => missing.push(gt.frame),
        }
    }
    if !missing.is_empty() {
        log::warn!(
            "{} frames have no detections and are excluded: {:?}",
            missing.len(),
            missing
        );
    }
    let scored: Vec<Vec<Scored>> = present
        .par_iter()
        .map(|(gt, d)| score_frame(gt, d, cfg))
        .collect::<Result<_>>()?;
    let frames = scored.len();
    let mut rows = Vec::new();
    let mut omitted = Vec::new();
    let mut push = |metric: &str, param: f64, value: f64| {
        rows.push(MetricRow {
            metric: metric.to_string(),
            param,
            value,
        })
    };
    let rate = |hits: usize| if frames == 0 { 0.0 } else { hits as f64 / frames as f64 };

    for &n in &cfg.n_list {
        let detected = scored
            .iter()
            .filter(|s| s.iter().take(n).any(|c| c.iou >= cfg.min_iou))
            .count();
        let best: Vec<Option<&Scored>> = scored.iter().map(|s| best_pose(s, n)).collect();
        let consistent: Vec<f64> = best
            .iter()
            .flatten()
            .filter(|b| b.rmse <= cfg.threshold)
            .map(|b| b.rmse)
            .collect();
        let tips: Vec<f64> = present
            .iter()
            .zip(&best)
            .filter_map(|((gt, _), b)| match b {
                Some(b) => b.tips,
                None => FINGERTIPS.iter().any(|&i| gt.visible[i]).then_some(0.0),
            })
            .collect();
        push("detection_rate", n as f64, rate(detected));
        push("viewpoint_consistent_rate", n as f64, rate(consistent.len()));
        if consistent.is_empty() {
            omitted.push(format!("conditional_rmse at N = {n}: no viewpoint-consistent frame"));
        } else {
            push(
                "conditional_rmse",
                n as f64,
                consistent.iter().sum::<f64>() / consistent.len() as f64,
            );
        }
        if tips.is_empty() {
            omitted.push(format!("fingertip_accuracy at N = {n}: no visible fingertip"));
        } else {
            push(
                "fingertip_accuracy",
                n as f64,
                tips.iter().sum::<f64>() / tips.len() as f64,
            );
        }
    }

    for &t in &cfg.sweep {
        let hits = scored
            .iter()
            .filter(|s| best_pose(s, cfg.sweep_n).is_some_and(|b| b.rmse <= t))
            .count();
        push("viewpoint_consistent_rate_px", t, rate(hits));
    }

    let mut thresholds: Vec<u64> = scored.iter().flatten().map(|c| c.votes).collect();
    thresholds.sort_unstable();
    thresholds.dedup();
    for &tau in &thresholds {
        let kept: Vec<&Scored> = scored.iter().flatten().filter(|c| c.votes >= tau).collect();
        let good = kept.iter().filter(|c| c.iou >= cfg.min_iou).count();
        let found = scored
            .iter()
            .filter(|s| s.iter().any(|c| c.votes >= tau && c.iou >= cfg.min_iou))
            .count();
        push("pr_precision", tau as f64, good as f64 / kept.len() as f64);
        push("pr_recall", tau as f64, rate(found));
    }

    Ok(MetricsTable {
        rows,
        frames,
        missing_frames: missing,
        omitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kps(offset: [f64; 2]) -> Vec<[f64; 2]> {
        (0..20)
            .map(|i| [50.0 + 3.0 * i as f64 + offset[0], 80.0 - 2.0 * i as f64 + offset[1]])
            .collect()
    }

    fn gt(frame: usize) -> GroundTruth {
        GroundTruth {
            frame,
            bbox: BoundingBox::square(80.0, 60.0, 80.0),
            keypoints: kps([0.0, 0.0]),
            visible: vec![true; 20],
        }
    }

    fn cand(bbox: BoundingBox, keypoints: Vec<[f64; 2]>, votes: u64) -> Candidate {
        Candidate {
            bbox,
            window: bbox,
            class: 0,
            votes,
            margin: 0.0,
            keypoints,
        }
    }

    #[test]
    fn iou_examples() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &BoundingBox::new(20.0, 0.0, 5.0, 5.0)).unwrap(), 0.0);
        assert!((iou(&a, &BoundingBox::new(5.0, 0.0, 10.0, 10.0)).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(iou(&a, &BoundingBox::new(0.0, 0.0, 0.0, 4.0)).is_err());
    }

    #[test]
    fn rmse_examples() {
        let t = kps([0.0, 0.0]);
        assert_eq!(rmse2d(&t, &t).unwrap(), 0.0);
        assert!((rmse2d(&kps([3.0, 4.0]), &t).unwrap() - 5.0).abs() < 1e-12);
        assert!(rmse2d(&t[..19], &t).is_err());
        // one point off by (6, 8), the rest exact: sqrt(100 / 20)
        let mut p = t.clone();
        p[7][0] += 6.0;
        p[7][1] += 8.0;
        assert!((rmse2d(&p, &t).unwrap() - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn consistency_threshold_is_inclusive() {
        let t = kps([0.0, 0.0]);
        assert!(viewpoint_consistent(&t, &t, 10.0).unwrap());
        assert!(viewpoint_consistent(&kps([3.0, 4.0]), &t, 10.0).unwrap());
        assert!(viewpoint_consistent(&kps([3.0, 4.0]), &t, 5.0).unwrap());
        assert!(!viewpoint_consistent(&kps([3.0, 4.0]), &t, 4.99).unwrap());
    }

    #[test]
    fn fingertip_examples() {
        let t = kps([0.0, 0.0]);
        assert_eq!(fingertip_accuracy(&t, &t, &[true; 20], 10.0), Some(1.0));
        assert_eq!(fingertip_accuracy(&t, &t, &[false; 20], 10.0), None);
        let mut p = t.clone();
        p[3] = [500.0, 500.0];
        p[7] = [-500.0, 500.0];
        assert_eq!(fingertip_accuracy(&p, &t, &[true; 20], 10.0), Some(0.6));
    }

    #[test]
    fn perfect_detections_score_one() {
        let truth: Vec<GroundTruth> = (0..5).map(gt).collect();
        let dets: Vec<FrameDetections> = truth
            .iter()
            .map(|g| FrameDetections {
                frame: g.frame,
                candidates: vec![cand(g.bbox, g.keypoints.clone(), 3)],
            })
            .collect();
        let m = evaluate(&truth, &dets, &EvalConfig::default()).unwrap();
        for n in [1.0, 10.0] {
            assert_eq!(m.get("detection_rate", n), Some(1.0));
            assert_eq!(m.get("viewpoint_consistent_rate", n), Some(1.0));
            assert_eq!(m.get("conditional_rmse", n), Some(0.0));
            assert_eq!(m.get("fingertip_accuracy", n), Some(1.0));
        }
        assert_eq!(m.get("pr_precision", 3.0), Some(1.0));
        assert!(m.missing_frames.is_empty());
        assert!(m.to_csv().starts_with("metric,param,value\n"));
    }

    #[test]
    fn missing_frames_are_excluded() {
        let truth: Vec<GroundTruth> = (0..3).map(gt).collect();
        let dets = vec![FrameDetections {
            frame: 1,
            candidates: vec![cand(truth[1].bbox, truth[1].keypoints.clone(), 1)],
        }];
        let m = evaluate(&truth, &dets, &EvalConfig::default()).unwrap();
        assert_eq!(m.missing_frames, vec![0, 2]);
        assert_eq!(m.frames, 1);
        assert_eq!(m.get("detection_rate", 1.0), Some(1.0));
    }

    #[test]
    fn covering_generator_reaches_full_consistency() {
        // the right pose sits ever deeper in the list; only long lists find it
        let truth: Vec<GroundTruth> = (0..20).map(gt).collect();
        let dets: Vec<FrameDetections> = truth
            .iter()
            .map(|g| {
                let mut c: Vec<Candidate> = (0..g.frame)
                    .map(|k| cand(g.bbox, kps([30.0 + k as f64, 0.0]), 5))
                    .collect();
                c.push(cand(g.bbox, g.keypoints.clone(), 1));
                FrameDetections {
                    frame: g.frame,
                    candidates: c,
                }
            })
            .collect();
        let cfg = EvalConfig {
            n_list: vec![1, 5, 10, 1000],
            ..EvalConfig::default()
        };
        let m = evaluate(&truth, &dets, &cfg).unwrap();
        assert_eq!(m.get("viewpoint_consistent_rate", 1000.0), Some(1.0));
        assert!(m.get("viewpoint_consistent_rate", 1.0).unwrap() < 0.1);
    }

    fn arb_frames() -> impl Strategy<Value = (Vec<GroundTruth>, Vec<FrameDetections>)> {
        prop::collection::vec(
            prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0, 1u64..20, -30.0f64..30.0), 0..12),
            1..15,
        )
        .prop_map(|frames| {
            let truth: Vec<GroundTruth> = (0..frames.len()).map(gt).collect();
            let dets = frames
                .into_iter()
                .enumerate()
                .map(|(f, cs)| FrameDetections {
                    frame: f,
                    candidates: cs
                        .into_iter()
                        .map(|(dx, dy, v, shift)| {
                            let b = truth[f].bbox;
                            cand(BoundingBox::new(b.x + shift, b.y, b.w, b.h), kps([dx, dy]), v)
                        })
                        .collect(),
                })
                .collect();
            (truth, dets)
        })
    }

    proptest! {
        #[test]
        fn rates_never_drop_with_more_candidates_or_looser_thresholds((truth, dets) in arb_frames()) {
            let cfg = EvalConfig { n_list: (1..=12).collect(), ..EvalConfig::default() };
            let m = evaluate(&truth, &dets, &cfg).unwrap();
            for metric in ["detection_rate", "viewpoint_consistent_rate"] {
                for n in 1..12 {
                    prop_assert!(m.get(metric, n as f64).unwrap() <= m.get(metric, (n + 1) as f64).unwrap());
                }
            }
            for w in cfg.sweep.windows(2) {
                prop_assert!(m.get("viewpoint_consistent_rate_px", w[0]).unwrap()
                    <= m.get("viewpoint_consistent_rate_px", w[1]).unwrap());
            }
            let recall: Vec<&MetricRow> = m.rows.iter().filter(|r| r.metric == "pr_recall").collect();
            for w in recall.windows(2) {
                prop_assert!(w[0].param < w[1].param);
                prop_assert!(w[1].value <= w[0].value);
            }
            for r in &m.rows {
                if r.metric != "conditional_rmse" {
                    prop_assert!((0.0..=1.0).contains(&r.value));
                } else {
                    prop_assert!(r.value >= 0.0 && r.value.is_finite());
                }
            }
        }
    }
}
