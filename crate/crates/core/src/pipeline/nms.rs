//! Greedy box non-maximum suppression.

use crate::geometry;

use super::DetectionRecord;

/// Score-descending greedy suppression for one image's detections: keep
/// the top-scoring box, drop every box with IoU at or above the threshold
/// against any kept box. Score ties keep input order; output preserves
/// input order.
pub fn nms(detections: &[DetectionRecord], iou_threshold: f64) -> Vec<DetectionRecord> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut keep = vec![false; detections.len()];
    let mut kept_indices: Vec<usize> = Vec::new();
    for &i in &order {
        let suppressed = kept_indices
            .iter()
            .any(|&k| geometry::iou(&detections[i].shape, &detections[k].shape) >= iou_threshold);
        if !suppressed {
            keep[i] = true;
            kept_indices.push(i);
        }
    }
    detections
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, d)| d.clone())
        .collect()
}
