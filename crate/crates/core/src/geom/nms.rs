use std::cmp::Ordering;

use super::{bev_iou, Box7};

/// Greedy oriented NMS in the BEV plane.
///
/// Returns kept indices ordered by descending score; equal scores keep the
/// lower index first. A candidate is suppressed when its IoU with an already
/// kept box is at least `iou_threshold`.
pub fn nms_bev(boxes: &[Box7], scores: &[f64], iou_threshold: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "boxes and scores must align");
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        if keep
            .iter()
            .all(|&k| bev_iou(&boxes[k], &boxes[i]) < iou_threshold)
        {
            keep.push(i);
        }
    }
    keep
}
