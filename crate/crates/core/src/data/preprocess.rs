use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloud::{Label, LabeledBox, PointCloud, Scene, IGNORE_LABEL};
use super::views::{DetView, SegView};
use crate::geom::Box7;

/// Camera field-of-view wedge around the forward (`z`) axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FovConfig {
    pub half_angle_deg: f64,
    /// Points must lie strictly beyond this forward distance.
    pub min_forward: f64,
}

impl Default for FovConfig {
    fn default() -> Self {
        FovConfig {
            half_angle_deg: 45.0,
            min_forward: 0.0,
        }
    }
}

impl FovConfig {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        p[2] > self.min_forward && p[0].atan2(p[2]).abs() <= self.half_angle_deg.to_radians()
    }
}

/// Keeps valid points inside the wedge, filtering labels alongside; boxes
/// survive iff their center is inside. The result carries no padding.
pub fn fov_crop(
    cloud: &PointCloud,
    labels: Option<&[Label]>,
    boxes: Option<&[Box7]>,
    fov: &FovConfig,
) -> (PointCloud, Option<Vec<Label>>, Option<Vec<Box7>>) {
    let keep: Vec<usize> = (0..cloud.valid_count)
        .filter(|&i| fov.contains(cloud.xyz(i)))
        .collect();
    let points = keep.iter().map(|&i| cloud.points[i]).collect();
    let labels = labels.map(|l| keep.iter().map(|&i| l[i]).collect());
    let boxes = boxes.map(|b| b.iter().filter(|b| fov.contains(b.center())).copied().collect());
    (PointCloud::new(points), labels, boxes)
}

impl Scene {
    pub fn fov_crop(&self, fov: &FovConfig) -> Scene {
        let (cloud, labels, _) = fov_crop(&self.cloud, Some(&self.labels), None, fov);
        let boxes: Vec<LabeledBox> = self
            .boxes
            .iter()
            .filter(|b| fov.contains(b.bbox.center()))
            .copied()
            .collect();
        Scene {
            cloud,
            labels: labels.expect("labels passed through"),
            boxes,
            meta: self.meta.clone(),
        }
    }
}

impl SegView {
    pub fn fov_crop(&self, fov: &FovConfig) -> SegView {
        let (cloud, labels, _) = fov_crop(&self.cloud, Some(&self.labels), None, fov);
        SegView {
            cloud,
            labels: labels.expect("labels passed through"),
            source_seed: self.source_seed,
        }
    }
}

impl DetView {
    pub fn fov_crop(&self, fov: &FovConfig) -> DetView {
        let (cloud, _, boxes) = fov_crop(&self.cloud, None, Some(&self.boxes), fov);
        DetView {
            cloud,
            boxes: boxes.expect("boxes passed through"),
            source_seed: self.source_seed,
        }
    }
}

/// Source rows for a fixed-size sample: a shuffled subset without
/// replacement when there are too many valid rows, otherwise a shuffle of
/// all of them (the caller pads the rest).
pub fn sample_indices(valid_count: usize, target_n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if valid_count > target_n {
        let mut idx = index::sample(&mut rng, valid_count, target_n).into_vec();
        idx.shuffle(&mut rng);
        idx
    } else {
        let mut idx: Vec<usize> = (0..valid_count).collect();
        idx.shuffle(&mut rng);
        idx
    }
}

/// Resamples the valid rows to exactly `target_n` rows, zero-padding when
/// short. Padded rows get [`IGNORE_LABEL`].
pub fn fixed_size_sample(
    cloud: &PointCloud,
    labels: Option<&[Label]>,
    target_n: usize,
    seed: u64,
) -> (PointCloud, Option<Vec<Label>>) {
    assert!(target_n > 0, "target size must be positive");
    let idx = sample_indices(cloud.valid_count, target_n, seed);
    let mut points: Vec<[f64; 4]> = idx.iter().map(|&i| cloud.points[i]).collect();
    let valid_count = points.len();
    points.resize(target_n, [0.0; 4]);
    let labels = labels.map(|l| {
        let mut out: Vec<Label> = idx.iter().map(|&i| l[i]).collect();
        out.resize(target_n, IGNORE_LABEL);
        out
    });
    (
        PointCloud {
            points,
            valid_count,
        },
        labels,
    )
}

/// Centers reflectance by subtracting 0.5 on valid rows.
pub fn normalize_reflectance(cloud: &mut PointCloud) {
    for p in &mut cloud.points[..cloud.valid_count] {
        p[3] -= 0.5;
    }
}

/// Closed center ranges used to discard far-away boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRange {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Default for BoxRange {
    fn default() -> Self {
        BoxRange {
            x: [-40.0, 40.0],
            y: [-1.0, 3.0],
            z: [0.0, 70.4],
        }
    }
}

impl BoxRange {
    pub fn contains(&self, c: [f64; 3]) -> bool {
        let within = |v: f64, r: [f64; 2]| v >= r[0] && v <= r[1];
        within(c[0], self.x) && within(c[1], self.y) && within(c[2], self.z)
    }
}

pub fn range_filter(boxes: &[Box7], range: &BoxRange) -> Vec<Box7> {
    boxes
        .iter()
        .filter(|b| range.contains(b.center()))
        .copied()
        .collect()
}
