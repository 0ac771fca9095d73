use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{miou, ConfusionMatrix, RecallAccumulator, RECALL_THRESHOLDS};
use super::proposals::{proposals_from_output, select_proposals, ProposalConfig, ProposalSet};
use crate::data::{fixed_size_sample, normalize_reflectance, ClassTable, DetView, FovConfig, Label, PointCloud, SegView};
use crate::error::{Error, Result};
use crate::geom::{bev_iou, iou_3d, Box7};
use crate::model::DassModel;

/// Anything that labels points and proposes boxes. Clouds are handed over
/// exactly as the model sees them: cropped, resampled and with centered
/// reflectance.
pub trait Predictor {
    fn num_classes(&self) -> usize;

    /// One label per row of `cloud` (padding rows included).
    fn segment(&self, cloud: &PointCloud) -> Result<Vec<Label>>;

    /// Raw proposals, or `None` when the predictor has no proposal head.
    fn propose(&self, cloud: &PointCloud) -> Result<Option<ProposalSet>>;
}

impl Predictor for DassModel {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn segment(&self, cloud: &PointCloud) -> Result<Vec<Label>> {
        let pred = self.predict(&[cloud])?.remove(0);
        Ok((0..pred.seg_logits.rows)
            .map(|r| argmax(pred.seg_logits.row(r)) as Label)
            .collect())
    }

    fn propose(&self, cloud: &PointCloud) -> Result<Option<ProposalSet>> {
        if !self.has_det_head() {
            return Ok(None);
        }
        let pred = self.predict(&[cloud])?.remove(0);
        let out = pred.det.expect("model has a proposal head");
        let xyz: Vec<[f64; 3]> = (0..cloud.len()).map(|i| cloud.xyz(i)).collect();
        Ok(Some(proposals_from_output(&out, &xyz, cloud.valid_count, &self.config.codec)))
    }
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// A predictor that knows the answers: labels are looked up by point
/// coordinates, proposals are the ground-truth boxes of the matching view.
/// Useful to validate the evaluation plumbing.
pub struct OraclePredictor {
    num_classes: usize,
    labels: HashMap<[u64; 3], Label>,
    boxes: Vec<(PointCloud, Vec<Box7>)>,
}

fn key(p: [f64; 3]) -> [u64; 3] {
    [p[0].to_bits(), p[1].to_bits(), p[2].to_bits()]
}

impl OraclePredictor {
    pub fn new(num_classes: usize, seg: &[SegView], det: &[DetView]) -> Self {
        let mut labels = HashMap::new();
        for v in seg {
            for (i, &l) in v.labels.iter().enumerate().take(v.cloud.valid_count) {
                labels.insert(key(v.cloud.xyz(i)), l);
            }
        }
        OraclePredictor {
            num_classes,
            labels,
            boxes: det.iter().map(|v| (v.cloud.clone(), v.boxes.clone())).collect(),
        }
    }
}

impl Predictor for OraclePredictor {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn segment(&self, cloud: &PointCloud) -> Result<Vec<Label>> {
        Ok((0..cloud.len())
            .map(|i| self.labels.get(&key(cloud.xyz(i))).copied().unwrap_or(0))
            .collect())
    }

    fn propose(&self, cloud: &PointCloud) -> Result<Option<ProposalSet>> {
        if cloud.valid_count == 0 {
            return Ok(Some(ProposalSet::default()));
        }
        let probe = key(cloud.xyz(0));
        let found = self
            .boxes
            .iter()
            .find(|(c, _)| (0..c.valid_count).any(|i| key(c.xyz(i)) == probe));
        let boxes = found.map(|(_, b)| b.clone()).unwrap_or_default();
        let n = boxes.len();
        Ok(Some(ProposalSet::from_unsorted(boxes, vec![1.0; n], vec![0; n])))
    }
}

/// Evaluation protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub fov: FovConfig,
    /// Points evaluated per scene; 0 evaluates every point of the crop.
    pub points_per_scene: usize,
    pub sample_seed: u64,
    pub thresholds: Vec<f64>,
    pub proposals: ProposalConfig,
    /// Also report recall under volumetric IoU.
    pub recall_3d: bool,
    /// Ground-truth boxes with fewer evaluated points than this are not
    /// counted: no proposal can originate from them.
    pub min_gt_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            fov: FovConfig::default(),
            points_per_scene: 2048,
            sample_seed: 0,
            thresholds: RECALL_THRESHOLDS.to_vec(),
            proposals: ProposalConfig::default(),
            recall_3d: false,
            min_gt_points: 1,
        }
    }
}

/// Segmentation and proposal metrics of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub accuracy: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub seg_scenes: usize,
    pub det_scenes: usize,
    pub thresholds: Vec<f64>,
    /// BEV-IoU recall per threshold; absent without ground truth or
    /// without a proposal head.
    pub recall: Option<Vec<f64>>,
    pub recall_3d: Option<Vec<f64>>,
    pub gt_boxes: usize,
    pub mean_proposals: Option<f64>,
}

impl EvalReport {
    /// IoU of the named class, if it occurred.
    pub fn class_iou(&self, name: &str) -> Option<f64> {
        let i = self.class_names.iter().position(|n| n == name)?;
        self.per_class_iou[i]
    }

    /// Recall at `threshold`, if reported.
    pub fn recall_at(&self, threshold: f64) -> Option<f64> {
        let i = self.thresholds.iter().position(|&t| (t - threshold).abs() < 1e-9)?;
        self.recall.as_ref().map(|r| r[i])
    }

    /// Human-readable tables.
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("    -".to_string(), |v| format!("{:5.1}", 100.0 * v));
        let mut s = String::new();
        let _ = writeln!(s, "Semantic segmentation ({} scenes, {} points)", self.seg_scenes, self.confusion.total());
        let _ = writeln!(s, "{:<16} {:>6}", "class", "IoU %");
        for (n, v) in self.class_names.iter().zip(&self.per_class_iou) {
            let _ = writeln!(s, "{n:<16} {:>6}", pct(*v));
        }
        let _ = writeln!(s, "{:<16} {:>6}", "mIoU", pct(self.miou));
        let _ = writeln!(s, "{:<16} {:>6}", "accuracy", pct(self.accuracy));
        let _ = writeln!(s);
        let _ = writeln!(s, "Proposal recall ({} scenes, {} boxes)", self.det_scenes, self.gt_boxes);
        let header: Vec<String> = self.thresholds.iter().map(|t| format!("{t:>6.1}")).collect();
        let _ = writeln!(s, "{:<16} {}", "IoU threshold", header.join(""));
        let row = |r: &Option<Vec<f64>>| -> String {
            match r {
                Some(r) => r.iter().map(|v| format!("{:>6.1}", 100.0 * v)).collect(),
                None => self.thresholds.iter().map(|_| format!("{:>6}", "-")).collect(),
            }
        };
        let _ = writeln!(s, "{:<16} {}", "recall % (BEV)", row(&self.recall));
        if self.recall_3d.is_some() {
            let _ = writeln!(s, "{:<16} {}", "recall % (3D)", row(&self.recall_3d));
        }
        if let Some(m) = self.mean_proposals {
            let _ = writeln!(s, "{:<16} {m:.1}", "proposals/scene");
        }
        s
    }
}

/// The cloud as the model sees it at evaluation time.
pub fn eval_cloud(cloud: &PointCloud, labels: Option<&[Label]>, cfg: &EvalConfig, index: usize) -> (PointCloud, Option<Vec<Label>>) {
    let (mut c, l) = if cfg.points_per_scene == 0 {
        let valid = PointCloud::new(cloud.valid().to_vec());
        (valid, labels.map(|l| l[..cloud.valid_count].to_vec()))
    } else {
        let seed = crate::train::derive_seed(&[cfg.sample_seed, index as u64]);
        fixed_size_sample(cloud, labels, cfg.points_per_scene, seed)
    };
    normalize_reflectance(&mut c);
    (c, l)
}

/// Runs segmentation over `seg` and proposal generation over `det`, both
/// cropped to the camera field of view.
pub fn evaluate(predictor: &dyn Predictor, seg: &[SegView], det: &[DetView], table: &ClassTable, cfg: &EvalConfig) -> Result<EvalReport> {
    let k = predictor.num_classes();
    if table.len() != k {
        return Err(Error::Config(format!("class table has {} classes, predictor {k}", table.len())));
    }
    let mut conf = ConfusionMatrix::new(k);
    for (i, v) in seg.iter().enumerate() {
        let v = v.fov_crop(&cfg.fov);
        let (cloud, labels) = eval_cloud(&v.cloud, Some(&v.labels), cfg, i);
        let labels = labels.expect("labels requested");
        let pred = predictor.segment(&cloud)?;
        if pred.len() != cloud.len() {
            return Err(Error::Data(format!("predictor returned {} labels for {} rows", pred.len(), cloud.len())));
        }
        let n = cloud.valid_count;
        conf.add_all(&labels[..n], &pred[..n]);
    }
    let mut bev = RecallAccumulator::new(&cfg.thresholds);
    let mut vol = RecallAccumulator::new(&cfg.thresholds);
    let mut has_head = true;
    let mut proposal_count = 0usize;
    for (i, v) in det.iter().enumerate() {
        let v = v.fov_crop(&cfg.fov);
        let (cloud, _) = eval_cloud(&v.cloud, None, cfg, seg.len() + i);
        let Some(raw) = predictor.propose(&cloud)? else {
            has_head = false;
            break;
        };
        let chosen = select_proposals(&raw, &cfg.proposals);
        proposal_count += chosen.len();
        // Reflectance centering does not move points, so containment is
        // tested against the evaluated cloud directly.
        let gt: Vec<Box7> = v
            .boxes
            .iter()
            .filter(|b| cloud.valid().iter().filter(|p| b.contains([p[0], p[1], p[2]])).count() >= cfg.min_gt_points)
            .copied()
            .collect();
        bev.add(&chosen.boxes, &gt, bev_iou);
        if cfg.recall_3d {
            vol.add(&chosen.boxes, &gt, iou_3d);
        }
    }
    let m = miou(&conf);
    let det_scenes = if has_head { det.len() } else { 0 };
    Ok(EvalReport {
        class_names: (0..k).map(|c| table.name(c as Label).to_string()).collect(),
        per_class_iou: m.per_class,
        miou: m.mean,
        accuracy: conf.accuracy(),
        confusion: conf,
        seg_scenes: seg.len(),
        det_scenes,
        thresholds: cfg.thresholds.clone(),
        recall: if has_head { bev.recall() } else { None },
        recall_3d: if has_head && cfg.recall_3d { vol.recall() } else { None },
        gt_boxes: if has_head { bev.total } else { 0 },
        mean_proposals: (has_head && det_scenes > 0).then(|| proposal_count as f64 / det_scenes as f64),
    })
}

/// Evaluates a trained model on held-out scenes: the segmentation view and
/// the detection view of every scene.
pub fn evaluate_model(model: &DassModel, test: &[crate::data::Scene], table: &ClassTable, cfg: &EvalConfig) -> Result<EvalReport> {
    let seg: Vec<SegView> = test.iter().map(|s| s.seg_view()).collect();
    let det: Vec<DetView> = test.iter().map(|s| s.det_view(table)).collect();
    evaluate(model, &seg, &det, table, cfg)
}
