//! Segmentation and detection losses with their analytic gradients.
//!
//! Losses are evaluated outside the autodiff graph: each returns its value
//! and the gradient with respect to the head output, which then seeds the
//! backward pass.

use log::warn;

use crate::data::{Label, PointCloud, IGNORE_LABEL};
use crate::geom::{BinTarget, Box7, BoxCodecConfig, DetLayout};
use crate::nn::{log_sum_exp, softmax_in_place, Tensor};

/// Smooth-L1 transition point.
pub const SMOOTH_L1_BETA: f64 = 1.0;

/// Class weights proportional to inverse frequency:
/// `w_c = total / (K · count_c)`, and `0` for classes that never occur.
/// Ignored labels are not counted.
pub fn class_weights_from_frequency<'a>(labels: impl IntoIterator<Item = &'a [Label]>, num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0u64; num_classes];
    for ls in labels {
        for &l in ls {
            if l != IGNORE_LABEL && (l as usize) < num_classes {
                counts[l as usize] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                total as f64 / (num_classes as f64 * c as f64)
            }
        })
        .collect()
}

/// Weighted cross-entropy averaged over contributing points: rows with an
/// ignored label, or a class of weight zero, do not contribute. Returns the
/// loss and its gradient with respect to `logits`.
pub fn seg_loss(logits: &Tensor, labels: &[Label], class_weights: &[f64]) -> (f64, Tensor) {
    assert_eq!(logits.rows, labels.len(), "one label per row");
    assert_eq!(logits.cols, class_weights.len(), "one weight per class");
    let mut grad = Tensor::zeros(logits.rows, logits.cols);
    let mut total_w = 0.0;
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let Some(&w) = class_weights.get(y as usize) else { continue };
        if y == IGNORE_LABEL || w <= 0.0 {
            continue;
        }
        let row = logits.row(r);
        loss += w * (log_sum_exp(row) - row[y as usize]);
        total_w += w;
        let g = grad.row_mut(r);
        g.copy_from_slice(row);
        softmax_in_place(g);
        g[y as usize] -= 1.0;
        g.iter_mut().for_each(|v| *v *= w);
    }
    if total_w == 0.0 {
        warn!("segmentation batch has no contributing points; loss defined as 0");
        return (0.0, grad);
    }
    grad.scale(1.0 / total_w);
    (loss / total_w, grad)
}

pub fn smooth_l1(e: f64) -> f64 {
    let a = e.abs();
    if a < SMOOTH_L1_BETA {
        0.5 * a * a / SMOOTH_L1_BETA
    } else {
        a - 0.5 * SMOOTH_L1_BETA
    }
}

pub fn smooth_l1_grad(e: f64) -> f64 {
    if e.abs() < SMOOTH_L1_BETA {
        e / SMOOTH_L1_BETA
    } else {
        e.signum()
    }
}

/// Per-point detection targets for one stacked batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DetTargets {
    /// Bin targets of points that contribute to the box terms.
    pub targets: Vec<Option<BinTarget>>,
    /// Objectness label: the point lies inside some ground-truth box.
    pub inside: Vec<bool>,
    /// Rows that are real points.
    pub valid: Vec<bool>,
}

impl DetTargets {
    pub fn foreground_count(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }

    pub fn extend(&mut self, other: DetTargets) {
        self.targets.extend(other.targets);
        self.inside.extend(other.inside);
        self.valid.extend(other.valid);
    }
}

/// Encodes every valid point inside a ground-truth box against that box;
/// a point inside several boxes is assigned to the one whose center is
/// nearest. Points outside all boxes, padding rows, and points whose center
/// offset falls outside the search scope get no box target.
pub fn det_targets(cloud: &PointCloud, boxes: &[Box7], codec: &BoxCodecConfig) -> DetTargets {
    let n = cloud.len();
    let mut targets = vec![None; n];
    let mut inside = vec![false; n];
    let valid: Vec<bool> = (0..n).map(|i| i < cloud.valid_count).collect();
    let members: Vec<Vec<bool>> = boxes.iter().map(|b| cloud.points_in_box(b)).collect();
    for i in 0..cloud.valid_count {
        let p = cloud.xyz(i);
        let mut best: Option<(f64, &Box7)> = None;
        for (b, m) in boxes.iter().zip(&members) {
            if m[i] {
                let d = (b.x - p[0]).powi(2) + (b.y - p[1]).powi(2) + (b.z - p[2]).powi(2);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, b));
                }
            }
        }
        if let Some((_, b)) = best {
            inside[i] = true;
            targets[i] = codec.encode_box(p, b).ok();
        }
    }
    DetTargets {
        targets,
        inside,
        valid,
    }
}

/// Components of the detection loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetLossParts {
    /// Bin-classification, residual and direct-regression terms, averaged
    /// over foreground points.
    pub box_terms: f64,
    /// Class-balanced objectness cross-entropy.
    pub objectness: f64,
    pub total: f64,
    pub foreground: usize,
}

fn softmax_ce(row: &[f64], y: usize, grad: &mut [f64], scale: f64) -> f64 {
    let mut p = row.to_vec();
    softmax_in_place(&mut p);
    for (g, q) in grad.iter_mut().zip(&p) {
        *g += scale * q;
    }
    grad[y] -= scale;
    log_sum_exp(row) - row[y]
}

/// `log(1 + e^z) − y·z`, the binary cross-entropy of a logit.
fn bce_logit(z: f64, y: bool) -> f64 {
    let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    if y { sp - z } else { sp }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Detection loss over a stacked head output. Box terms use unweighted
/// cross-entropy for the bins and smooth-L1 for the residuals (center and
/// yaw residuals are compared in half-bin units) and for the directly
/// regressed elevation and size; they are averaged over foreground points.
/// Objectness is a binary cross-entropy over all valid points, with the
/// positive and negative groups each averaged separately and then averaged
/// together.
pub fn det_loss(out: &Tensor, t: &DetTargets, codec: &BoxCodecConfig) -> (DetLossParts, Tensor) {
    let layout = DetLayout::new(codec);
    assert_eq!(out.cols, layout.total, "detection channel count");
    assert_eq!(out.rows, t.targets.len(), "one target per row");
    let mut grad = Tensor::zeros(out.rows, out.cols);
    let fg = t.foreground_count();
    let mut box_terms = 0.0;
    if fg > 0 {
        let s = 1.0 / fg as f64;
        let half = codec.bin_delta / 2.0;
        let half_r = codec.rot_alpha / 2.0;
        for (r, tg) in t.targets.iter().enumerate() {
            let Some(tg) = tg else { continue };
            let row = out.row(r);
            let g = grad.row_mut(r);
            let mut l = 0.0;
            for (range, y) in [
                (layout.x_bins.clone(), tg.x_bin),
                (layout.z_bins.clone(), tg.z_bin),
                (layout.r_bins.clone(), tg.r_bin),
            ] {
                l += softmax_ce(&row[range.clone()], y, &mut g[range], s);
            }
            let reg = [
                (layout.x_res, tg.x_res / half),
                (layout.z_res, tg.z_res / half),
                (layout.r_res, tg.r_res / half_r),
                (layout.y_off, tg.y_off),
                (layout.hwl, tg.hwl_res[0]),
                (layout.hwl + 1, tg.hwl_res[1]),
                (layout.hwl + 2, tg.hwl_res[2]),
            ];
            for (c, target) in reg {
                let e = row[c] - target;
                l += smooth_l1(e);
                g[c] += s * smooth_l1_grad(e);
            }
            box_terms += l;
        }
        box_terms /= fg as f64;
    }
    let npos = t.inside.iter().zip(&t.valid).filter(|(i, v)| **i && **v).count();
    let nneg = t.valid.iter().filter(|v| **v).count() - npos;
    let groups = (npos > 0) as usize + (nneg > 0) as usize;
    let mut objectness = 0.0;
    if groups > 0 {
        for r in 0..out.rows {
            if !t.valid[r] {
                continue;
            }
            let y = t.inside[r];
            let n = if y { npos } else { nneg };
            let s = 1.0 / (groups as f64 * n as f64);
            let z = out.get(r, layout.objectness);
            objectness += s * bce_logit(z, y);
            grad.row_mut(r)[layout.objectness] += s * (sigmoid(z) - if y { 1.0 } else { 0.0 });
        }
    }
    (
        DetLossParts {
            box_terms,
            objectness,
            total: box_terms + objectness,
            foreground: fg,
        },
        grad,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn class_weight_examples() {
        let uniform: Vec<Label> = vec![0, 1, 0, 1];
        assert_eq!(class_weights_from_frequency([&uniform[..]], 2), vec![1.0, 1.0]);
        let mut skew = vec![0 as Label; 90];
        skew.extend(vec![1 as Label; 10]);
        let w = class_weights_from_frequency([&skew[..]], 2);
        assert!((w[0] - 100.0 / 180.0).abs() < 1e-12);
        assert!((w[1] - 5.0).abs() < 1e-12);
        let w = class_weights_from_frequency([&[0 as Label, 0, IGNORE_LABEL][..]], 3);
        assert_eq!(w[1], 0.0);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn seg_loss_analytic_cases() {
        let perfect = Tensor::from_vec(2, 3, vec![1e3, 0.0, 0.0, 0.0, 0.0, 1e3]);
        assert!(seg_loss(&perfect, &[0, 2], &[1.0; 3]).0.abs() < 1e-12);
        let uniform = Tensor::zeros(4, 5);
        let (l, _) = seg_loss(&uniform, &[0, 1, 2, 4], &[1.0; 5]);
        assert!((l - 5f64.ln()).abs() < 1e-12);
        let (l, g) = seg_loss(&uniform, &[IGNORE_LABEL, IGNORE_LABEL, IGNORE_LABEL, IGNORE_LABEL], &[1.0; 5]);
        assert_eq!(l, 0.0);
        assert!(g.data.iter().all(|v| *v == 0.0));
    }

    /// Independent cross-entropy: probabilities from explicit exponentials.
    fn ce_oracle(logits: &[Vec<f64>], labels: &[usize], w: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (row, &y) in logits.iter().zip(labels) {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            num += -w[y] * (row[y].exp() / z).ln();
            den += w[y];
        }
        num / den
    }

    #[test]
    fn seg_loss_matches_oracle_and_gradient() {
        let rows = vec![vec![0.2, -1.0, 0.5], vec![1.5, 0.1, -0.3], vec![-0.7, 0.9, 0.0]];
        let labels = [2usize, 0, 1];
        let w = [0.5, 2.0, 1.2];
        let t = Tensor::from_rows(&rows);
        let ls: Vec<Label> = labels.iter().map(|&v| v as Label).collect();
        let (l, g) = seg_loss(&t, &ls, &w);
        assert!((l - ce_oracle(&rows, &labels, &w)).abs() < 1e-9);
        let eps = 1e-6;
        for k in 0..t.len() {
            let mut p = t.clone();
            p.data[k] += eps;
            let mut m = t.clone();
            m.data[k] -= eps;
            let fd = (seg_loss(&p, &ls, &w).0 - seg_loss(&m, &ls, &w).0) / (2.0 * eps);
            assert!((fd - g.data[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn smooth_l1_definition() {
        assert!((smooth_l1(0.5) - 0.125).abs() < 1e-15);
        assert!((smooth_l1(-2.0) - 1.5).abs() < 1e-15);
        assert_eq!(smooth_l1_grad(3.0), 1.0);
    }

    fn car() -> Box7 {
        Box7::new(1.0, 0.0, 10.0, 1.5, 1.6, 3.9, 0.3)
    }

    #[test]
    fn targets_mask_and_center_point() {
        let codec = BoxCodecConfig::default();
        let cloud = PointCloud::new(vec![[1.0, 0.0, 10.0, 0.0], [5.0, 0.0, 10.0, 0.0]]);
        let t = det_targets(&cloud, &[car()], &codec);
        assert_eq!(t.inside, vec![true, false]);
        assert!(t.targets[1].is_none());
        let tg = t.targets[0].unwrap();
        // zero offset lands on the left edge of the middle bin
        assert_eq!((tg.x_bin, tg.z_bin), (6, 6));
        assert!((tg.x_res + 0.25).abs() < 1e-12 && (tg.z_res + 0.25).abs() < 1e-12);
        let b = codec.decode_target(cloud.xyz(0), &tg).unwrap();
        for (u, v) in [(b.x, 1.0), (b.y, 0.0), (b.z, 10.0), (b.h, 1.5), (b.w, 1.6), (b.l, 3.9), (b.r, 0.3)] {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn overlapping_boxes_use_nearest_center() {
        let codec = BoxCodecConfig::default();
        let a = Box7::new(0.0, 0.0, 10.0, 2.0, 2.0, 4.0, 0.0);
        let b = Box7::new(0.0, 0.0, 11.0, 2.0, 2.0, 4.0, 0.0);
        let cloud = PointCloud::new(vec![[0.0, 0.0, 10.8, 0.0], [0.0, 0.0, 10.2, 0.0]]);
        let t = det_targets(&cloud, &[a, b], &codec);
        let near_b = codec.decode_target(cloud.xyz(0), &t.targets[0].unwrap()).unwrap();
        let near_a = codec.decode_target(cloud.xyz(1), &t.targets[1].unwrap()).unwrap();
        assert!((near_b.z - 11.0).abs() < 1e-9);
        assert!((near_a.z - 10.0).abs() < 1e-9);
    }

    fn perfect_row(codec: &BoxCodecConfig, tg: &BinTarget, obj: f64) -> Vec<f64> {
        let l = DetLayout::new(codec);
        let mut row = vec![-1e3; l.total];
        row[l.x_bins.start + tg.x_bin] = 1e3;
        row[l.z_bins.start + tg.z_bin] = 1e3;
        row[l.r_bins.start + tg.r_bin] = 1e3;
        row[l.x_res] = tg.x_res / (codec.bin_delta / 2.0);
        row[l.z_res] = tg.z_res / (codec.bin_delta / 2.0);
        row[l.r_res] = tg.r_res / (codec.rot_alpha / 2.0);
        row[l.y_off] = tg.y_off;
        row[l.hwl..l.hwl + 3].copy_from_slice(&tg.hwl_res);
        row[l.objectness] = obj;
        row
    }

    #[test]
    fn perfect_prediction_has_zero_box_terms() {
        let codec = BoxCodecConfig::default();
        let cloud = PointCloud::new(vec![[1.2, 0.3, 9.5, 0.0], [9.0, 0.0, 1.0, 0.0]]);
        let t = det_targets(&cloud, &[car()], &codec);
        let r0 = perfect_row(&codec, &t.targets[0].unwrap(), 50.0);
        let mut r1 = vec![0.0; codec.det_channels()];
        r1[DetLayout::new(&codec).objectness] = -50.0;
        let out = Tensor::from_rows(&[r0, r1]);
        let (parts, _) = det_loss(&out, &t, &codec);
        assert!(parts.box_terms.abs() < 1e-12);
        assert!(parts.objectness < 1e-20);
    }

    /// Brute-force recomputation of the single-point loss from the formula.
    #[test]
    fn single_point_matches_brute_force() {
        let codec = BoxCodecConfig::default();
        let l = DetLayout::new(&codec);
        let cloud = PointCloud::new(vec![[0.4, 0.2, 9.1, 0.0]]);
        let t = det_targets(&cloud, &[car()], &codec);
        let tg = t.targets[0].unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let row: Vec<f64> = (0..l.total).map(|_| rng.random_range(-2.0..2.0)).collect();
        let out = Tensor::from_rows(&[row.clone()]);
        let (parts, _) = det_loss(&out, &t, &codec);
        let ce = |logits: &[f64], y: usize| {
            let z: f64 = logits.iter().map(|v| v.exp()).sum();
            -(logits[y].exp() / z).ln()
        };
        let sl1 = |e: f64| if e.abs() < 1.0 { 0.5 * e * e } else { e.abs() - 0.5 };
        let want = ce(&row[l.x_bins.clone()], tg.x_bin)
            + ce(&row[l.z_bins.clone()], tg.z_bin)
            + ce(&row[l.r_bins.clone()], tg.r_bin)
            + sl1(row[l.x_res] - tg.x_res / 0.25)
            + sl1(row[l.z_res] - tg.z_res / 0.25)
            + sl1(row[l.r_res] - tg.r_res / (codec.rot_alpha / 2.0))
            + sl1(row[l.y_off] - tg.y_off)
            + sl1(row[l.hwl] - tg.hwl_res[0])
            + sl1(row[l.hwl + 1] - tg.hwl_res[1])
            + sl1(row[l.hwl + 2] - tg.hwl_res[2]);
        assert!((parts.box_terms - want).abs() < 1e-9);
        let z = row[l.objectness];
        assert!((parts.objectness - (1.0f64 + (-z).exp()).ln()).abs() < 1e-9);
    }

    #[test]
    fn det_loss_gradient_and_masking() {
        let codec = BoxCodecConfig::default();
        let boxes = [car(), Box7::new(-4.0, 0.1, 20.0, 1.4, 1.7, 4.2, 2.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts: Vec<[f64; 4]> = (0..30)
            .map(|i| {
                let b = &boxes[i % 2];
                [
                    b.x + rng.random_range(-1.0..1.0),
                    b.y + rng.random_range(-0.6..0.6),
                    b.z + rng.random_range(-2.5..2.5),
                    0.0,
                ]
            })
            .collect();
        pts.resize(34, [0.0; 4]);
        let cloud = PointCloud {
            points: pts,
            valid_count: 30,
        };
        let t = det_targets(&cloud, &boxes, &codec);
        assert!(t.foreground_count() > 5 && t.foreground_count() < 30);
        let out = Tensor::from_vec(34, 44, (0..34 * 44).map(|_| rng.random_range(-1.5..1.5)).collect());
        let (base, g) = det_loss(&out, &t, &codec);
        let eps = 1e-6;
        for k in (0..out.len()).step_by(7) {
            let mut p = out.clone();
            p.data[k] += eps;
            let mut m = out.clone();
            m.data[k] -= eps;
            let fd = (det_loss(&p, &t, &codec).0.total - det_loss(&m, &t, &codec).0.total) / (2.0 * eps);
            let rel = (fd - g.data[k]).abs() / fd.abs().max(g.data[k].abs()).max(1e-6);
            assert!(rel <= 1e-4 || (fd - g.data[k]).abs() < 1e-9, "{k}: {fd} vs {}", g.data[k]);
        }
        // perturbing channels of points without a box target leaves the box terms unchanged
        let mut noisy = out.clone();
        for (r, tg) in t.targets.iter().enumerate() {
            if tg.is_none() {
                noisy.row_mut(r).iter_mut().for_each(|v| *v += rng.random_range(-5.0..5.0));
            }
        }
        assert_eq!(det_loss(&noisy, &t, &codec).0.box_terms, base.box_terms);
    }

    #[test]
    fn empty_mask_keeps_objectness() {
        let codec = BoxCodecConfig::default();
        let cloud = PointCloud::new(vec![[9.0, 0.0, 1.0, 0.0]; 3]);
        let t = det_targets(&cloud, &[], &codec);
        let out = Tensor::zeros(3, 44);
        let (parts, g) = det_loss(&out, &t, &codec);
        assert_eq!(parts.box_terms, 0.0);
        assert!((parts.objectness - 2f64.ln()).abs() < 1e-12);
        assert!(g.get(0, 43) > 0.0);
    }
}
