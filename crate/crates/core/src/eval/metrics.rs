use serde::{Deserialize, Serialize};

use crate::data::{Label, IGNORE_LABEL};
use crate::geom::Box7;

/// Class confusion counts; rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    /// Adds one point; ignored or out-of-range ground truth is skipped.
    pub fn add(&mut self, gt: Label, pred: Label) {
        let k = self.num_classes;
        if gt == IGNORE_LABEL || gt as usize >= k {
            return;
        }
        let pred = (pred as usize).min(k - 1);
        self.counts[gt as usize * k + pred] += 1;
    }

    pub fn add_all(&mut self, gt: &[Label], pred: &[Label]) {
        assert_eq!(gt.len(), pred.len(), "one prediction per label");
        for (&g, &p) in gt.iter().zip(pred) {
            self.add(g, p);
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Fraction of evaluated points predicted correctly.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        let correct: u64 = (0..self.num_classes).map(|c| self.get(c, c)).sum();
        (total > 0).then(|| correct as f64 / total as f64)
    }

    /// Per-class intersection over union; `None` for classes that appear
    /// neither in the ground truth nor in the predictions.
    pub fn iou(&self) -> Vec<Option<f64>> {
        let k = self.num_classes;
        (0..k)
            .map(|c| {
                let tp = self.get(c, c);
                let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| self.get(c, p)).sum();
                let fp: u64 = (0..k).filter(|&g| g != c).map(|g| self.get(g, c)).sum();
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Relabels classes: class `c` becomes `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> ConfusionMatrix {
        let k = self.num_classes;
        let mut out = ConfusionMatrix::new(k);
        for g in 0..k {
            for p in 0..k {
                out.counts[perm[g] * k + perm[p]] = self.get(g, p);
            }
        }
        out
    }
}

/// Per-class IoU and their mean over the classes that occur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouResult {
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

pub fn miou(conf: &ConfusionMatrix) -> MiouResult {
    let per_class = conf.iou();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    MiouResult { per_class, mean }
}

/// Recall thresholds reported by default.
pub const RECALL_THRESHOLDS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Number of ground-truth boxes matched by some proposal at each threshold.
/// Several boxes may be matched by the same proposal.
pub fn recalled_counts(proposals: &[Box7], gt: &[Box7], thresholds: &[f64], iou: impl Fn(&Box7, &Box7) -> f64) -> Vec<usize> {
    let best: Vec<f64> = gt
        .iter()
        .map(|g| proposals.iter().map(|p| iou(p, g)).fold(0.0, f64::max))
        .collect();
    thresholds
        .iter()
        .map(|&t| best.iter().filter(|&&b| b >= t).count())
        .collect()
}

/// Fraction of ground-truth boxes whose best BEV IoU with any proposal
/// reaches each threshold; `None` without ground truth.
pub fn recall_at_iou(proposals: &[Box7], gt: &[Box7], thresholds: &[f64]) -> Option<Vec<f64>> {
    if gt.is_empty() {
        return None;
    }
    let counts = recalled_counts(proposals, gt, thresholds, crate::geom::bev_iou);
    Some(counts.iter().map(|&c| c as f64 / gt.len() as f64).collect())
}

/// Recall pooled over many scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallAccumulator {
    pub thresholds: Vec<f64>,
    pub recalled: Vec<usize>,
    pub total: usize,
}

impl RecallAccumulator {
    pub fn new(thresholds: &[f64]) -> Self {
        RecallAccumulator {
            thresholds: thresholds.to_vec(),
            recalled: vec![0; thresholds.len()],
            total: 0,
        }
    }

    pub fn add(&mut self, proposals: &[Box7], gt: &[Box7], iou: impl Fn(&Box7, &Box7) -> f64) {
        let c = recalled_counts(proposals, gt, &self.thresholds, iou);
        for (r, c) in self.recalled.iter_mut().zip(c) {
            *r += c;
        }
        self.total += gt.len();
    }

    pub fn recall(&self) -> Option<Vec<f64>> {
        (self.total > 0).then(|| self.recalled.iter().map(|&r| r as f64 / self.total as f64).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::bev_iou;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let mut c = ConfusionMatrix::new(3);
        c.add_all(&[0, 1, 2, 2], &[0, 1, 2, 2]);
        let r = miou(&c);
        assert_eq!(r.per_class, vec![Some(1.0); 3]);
        assert_eq!(r.mean, Some(1.0));
        assert_eq!(c.accuracy(), Some(1.0));
    }

    #[test]
    fn two_class_counts() {
        // Class 0: TP = 3, FN = 2 (predicted 1), FP = 1 (gt 1 predicted 0).
        let mut c = ConfusionMatrix::new(2);
        c.add_all(&[0, 0, 0, 0, 0, 1, 1], &[0, 0, 0, 1, 1, 0, 1]);
        assert!((c.iou()[0].unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(c.total(), 7);
    }

    #[test]
    fn empty_classes_are_excluded() {
        let mut c = ConfusionMatrix::new(3);
        c.add_all(&[0, 0, 1, 1], &[0, 1, 1, 1]);
        let r = miou(&c);
        assert_eq!(r.per_class[2], None);
        let want = (0.5 + 2.0 / 3.0) / 2.0;
        assert!((r.mean.unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn ignored_labels_are_skipped() {
        let mut c = ConfusionMatrix::new(2);
        c.add_all(&[IGNORE_LABEL, 1], &[0, 1]);
        assert_eq!(c.total(), 1);
    }

    proptest! {
        #[test]
        fn miou_invariant_to_relabeling(
            counts in proptest::collection::vec(0u64..20, 16),
            perm in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let c = ConfusionMatrix { num_classes: 4, counts };
            let p = c.permuted(&perm);
            let a = miou(&c);
            let b = miou(&p);
            match (a.mean, b.mean) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
            for cls in 0..4 {
                prop_assert_eq!(a.per_class[cls], b.per_class[perm[cls]]);
            }
        }
    }

    fn car(x: f64, z: f64) -> Box7 {
        Box7::new(x, 0.8, z, 1.6, 1.8, 4.0, 0.0)
    }

    #[test]
    fn proposals_equal_to_ground_truth_recall_everything() {
        let gt = vec![car(0.0, 10.0), car(5.0, 20.0)];
        assert_eq!(recall_at_iou(&gt, &gt, &RECALL_THRESHOLDS), Some(vec![1.0; 5]));
        assert_eq!(recall_at_iou(&[], &gt, &RECALL_THRESHOLDS), Some(vec![0.0; 5]));
        assert_eq!(recall_at_iou(&gt, &[], &RECALL_THRESHOLDS), None);
    }

    #[test]
    fn single_partial_overlap_matches_exhaustive_matcher() {
        let gt = vec![car(0.0, 10.0), car(10.0, 30.0)];
        // Shift along the length axis until the BEV IoU is 0.6.
        let s = 4.0 * (1.0 - 0.6) / (1.0 + 0.6);
        let p = car(0.0, 10.0 + s);
        assert!((bev_iou(&p, &gt[0]) - 0.6).abs() < 1e-9);
        let got = recall_at_iou(&[p], &gt, &RECALL_THRESHOLDS).unwrap();
        // Exhaustive oracle: a gt is recalled iff any proposal clears t.
        let oracle: Vec<f64> = RECALL_THRESHOLDS
            .iter()
            .map(|&t| gt.iter().filter(|g| [p].iter().any(|q| bev_iou(q, g) >= t)).count() as f64 / 2.0)
            .collect();
        assert_eq!(got, oracle);
        assert_eq!(got, vec![0.5, 0.5, 0.5, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn recall_is_non_increasing_in_threshold(
            props in proptest::collection::vec((-5.0..5.0f64, 5.0..25.0f64, 0.0..3.0f64), 0..6),
            gts in proptest::collection::vec((-5.0..5.0f64, 5.0..25.0f64, 0.0..3.0f64), 1..5),
        ) {
            let mk = |v: &Vec<(f64, f64, f64)>| -> Vec<Box7> {
                v.iter().map(|&(x, z, r)| Box7::new(x, 0.8, z, 1.6, 1.8, 4.0, r)).collect()
            };
            let r = recall_at_iou(&mk(&props), &mk(&gts), &RECALL_THRESHOLDS).unwrap();
            prop_assert!(r.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn accumulator_pools_scenes() {
        let mut acc = RecallAccumulator::new(&[0.5]);
        acc.add(&[car(0.0, 10.0)], &[car(0.0, 10.0), car(5.0, 30.0)], bev_iou);
        acc.add(&[], &[car(0.0, 10.0)], bev_iou);
        assert_eq!(acc.recall(), Some(vec![1.0 / 3.0]));
    }
}
