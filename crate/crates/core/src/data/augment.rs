use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloud::{LabeledBox, PointCloud, Scene};
use super::views::{DetView, SegView};
use crate::geom::{bev_iou, Box7, RigidTransform};

/// Global scene augmentation: yaw rotation, isotropic scaling and a flip
/// across the forward axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentPolicy {
    pub enabled: bool,
    pub max_rotation_deg: f64,
    pub scale_range: [f64; 2],
    pub flip_prob: f64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            enabled: true,
            max_rotation_deg: 10.0,
            scale_range: [0.95, 1.05],
            flip_prob: 0.5,
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        AugmentPolicy {
            enabled: false,
            ..AugmentPolicy::default()
        }
    }

    pub fn sample(&self, seed: u64) -> RigidTransform {
        if !self.enabled {
            return RigidTransform::default();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.max_rotation_deg.to_radians();
        let rotation = if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        let [lo, hi] = self.scale_range;
        let scale = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let flip = rng.random_bool(self.flip_prob.clamp(0.0, 1.0));
        RigidTransform::new(rotation, scale, flip)
    }
}

fn transform_cloud(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    let mut out = cloud.clone();
    let n = out.valid_count;
    t.apply_points(&mut out.points[..n]);
    out
}

/// Applies one sampled rigid transform to points and boxes together.
pub fn augment_scene(scene: &Scene, seed: u64, policy: &AugmentPolicy) -> Scene {
    let t = policy.sample(seed);
    Scene {
        cloud: transform_cloud(&scene.cloud, &t),
        labels: scene.labels.clone(),
        boxes: scene
            .boxes
            .iter()
            .map(|b| LabeledBox {
                bbox: t.apply_box(&b.bbox),
                class: b.class,
            })
            .collect(),
        meta: scene.meta.clone(),
    }
}

impl SegView {
    pub fn augment(&self, seed: u64, policy: &AugmentPolicy) -> SegView {
        let t = policy.sample(seed);
        SegView {
            cloud: transform_cloud(&self.cloud, &t),
            labels: self.labels.clone(),
            source_seed: self.source_seed,
        }
    }
}

impl DetView {
    pub fn augment(&self, seed: u64, policy: &AugmentPolicy) -> DetView {
        let t = policy.sample(seed);
        DetView {
            cloud: transform_cloud(&self.cloud, &t),
            boxes: self.boxes.iter().map(|b| t.apply_box(b)).collect(),
            source_seed: self.source_seed,
        }
    }
}

/// A ground-truth box together with the points it enclosed.
#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub bbox: Box7,
    pub points: Vec<[f64; 4]>,
}

/// Boxes harvested from detection views for transplanting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoxBank {
    pub entries: Vec<BankEntry>,
}

impl BoxBank {
    pub fn from_views(views: &[DetView]) -> Self {
        let mut entries = Vec::new();
        for v in views {
            for b in &v.boxes {
                let points: Vec<[f64; 4]> = v
                    .cloud
                    .valid()
                    .iter()
                    .filter(|p| b.contains([p[0], p[1], p[2]]))
                    .copied()
                    .collect();
                if !points.is_empty() {
                    entries.push(BankEntry { bbox: *b, points });
                }
            }
        }
        BoxBank { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Maximum number of bank draws per call.
pub const PLACEMENT_TRIES: usize = 20;

/// Implants up to `max_added` banked boxes at their original location when
/// they overlap no existing box. Each implant is dropped onto the ground
/// plane at `ground_y`, and scene points inside its vertical prism are
/// removed before its own points are added.
pub fn gt_box_augment(
    view: &DetView,
    bank: &BoxBank,
    seed: u64,
    max_added: usize,
    ground_y: f64,
) -> DetView {
    if bank.is_empty() || max_added == 0 {
        return view.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boxes = view.boxes.clone();
    let mut points: Vec<[f64; 4]> = view.cloud.valid().to_vec();
    let mut added = 0;
    for _ in 0..PLACEMENT_TRIES {
        if added == max_added {
            break;
        }
        let entry = &bank.entries[rng.random_range(0..bank.entries.len())];
        if boxes.iter().any(|b| bev_iou(b, &entry.bbox) > 0.0) {
            continue;
        }
        let dy = ground_y - entry.bbox.bottom();
        let mut placed = entry.bbox;
        placed.y += dy;
        points.retain(|p| !placed.contains_bev([p[0], p[1], p[2]]));
        points.extend(entry.points.iter().map(|p| [p[0], p[1] + dy, p[2], p[3]]));
        boxes.push(placed);
        added += 1;
    }
    DetView {
        cloud: PointCloud::new(points),
        boxes,
        source_seed: view.source_seed,
    }
}
