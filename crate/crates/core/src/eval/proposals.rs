use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geom::{nms_bev, Box7, BoxCodecConfig};
use crate::nn::Tensor;

/// Scored proposal boxes, sorted by descending score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalSet {
    pub boxes: Vec<Box7>,
    pub scores: Vec<f64>,
    /// Row of the point each proposal was decoded from.
    pub source: Vec<usize>,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Builds a set from unsorted parts, ordering by descending score (ties
    /// keep the input order).
    pub fn from_unsorted(boxes: Vec<Box7>, scores: Vec<f64>, source: Vec<usize>) -> Self {
        assert!(boxes.len() == scores.len() && boxes.len() == source.len());
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        order.sort_by(|&a, &b| desc(scores[a], scores[b]).then(a.cmp(&b)));
        ProposalSet {
            boxes: order.iter().map(|&i| boxes[i]).collect(),
            scores: order.iter().map(|&i| scores[i]).collect(),
            source: order.iter().map(|&i| source[i]).collect(),
        }
    }

    fn subset(&self, idx: &[usize]) -> ProposalSet {
        ProposalSet::from_unsorted(
            idx.iter().map(|&i| self.boxes[i]).collect(),
            idx.iter().map(|&i| self.scores[i]).collect(),
            idx.iter().map(|&i| self.source[i]).collect(),
        )
    }

    pub fn is_sorted(&self) -> bool {
        self.scores.windows(2).all(|w| w[0] >= w[1])
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Decodes one box per valid point from raw proposal-head output; the score
/// is the sigmoid of the objectness logit.
pub fn proposals_from_output(out: &Tensor, xyz: &[[f64; 3]], valid: usize, codec: &BoxCodecConfig) -> ProposalSet {
    let n = valid.min(out.rows).min(xyz.len());
    let mut boxes = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for (i, p) in xyz.iter().enumerate().take(n) {
        let d = codec.decode_row(*p, out.row(i));
        boxes.push(d.bbox);
        scores.push(1.0 / (1.0 + (-d.objectness).exp()));
    }
    ProposalSet::from_unsorted(boxes, scores, (0..n).collect())
}

/// Reduction of raw per-point proposals to a final short list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalConfig {
    /// Proposals kept by objectness before anything else.
    pub top_n: usize,
    /// Final number of proposals.
    pub top_m: usize,
    /// Forward distance separating the near and far ranges, meters.
    pub near_boundary: f64,
    /// Share of the final quota reserved for the near range.
    pub near_fraction: f64,
    pub nms_iou: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            top_n: 256,
            top_m: 32,
            near_boundary: 10.0,
            near_fraction: 0.7,
            nms_iou: 0.8,
        }
    }
}

/// Keeps the `top_n` best raw proposals, splits them by forward distance,
/// runs NMS within each range and fills the final `top_m` slots with the
/// near and far survivors in the configured proportion. When one range runs
/// short, its unused slots go to the other range. The two ranges are
/// suppressed independently, so the result is re-suppressed across them
/// before truncation.
pub fn select_proposals(raw: &ProposalSet, cfg: &ProposalConfig) -> ProposalSet {
    let top: Vec<usize> = {
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| desc(raw.scores[a], raw.scores[b]).then(a.cmp(&b)));
        order.truncate(cfg.top_n);
        order
    };
    let (near, far): (Vec<usize>, Vec<usize>) = top.iter().partition(|&&i| raw.boxes[i].z < cfg.near_boundary);
    let survivors = |idx: &[usize]| -> Vec<usize> {
        let boxes: Vec<Box7> = idx.iter().map(|&i| raw.boxes[i]).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| raw.scores[i]).collect();
        nms_bev(&boxes, &scores, cfg.nms_iou).into_iter().map(|k| idx[k]).collect()
    };
    let near = survivors(&near);
    let far = survivors(&far);
    let near_quota = ((cfg.top_m as f64) * cfg.near_fraction).round() as usize;
    let far_quota = cfg.top_m - near_quota.min(cfg.top_m);
    let take_near = near.len().min(near_quota + far_quota.saturating_sub(far.len()));
    let take_far = far.len().min(cfg.top_m - take_near);
    let mut chosen: Vec<usize> = near[..take_near].to_vec();
    chosen.extend_from_slice(&far[..take_far]);
    let pool = raw.subset(&chosen);
    let keep = nms_bev(&pool.boxes, &pool.scores, cfg.nms_iou);
    let mut keep: Vec<usize> = keep.into_iter().take(cfg.top_m).collect();
    keep.sort_unstable();
    pool.subset(&keep)
}
