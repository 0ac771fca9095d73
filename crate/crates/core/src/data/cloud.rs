use serde::{Deserialize, Serialize};

use crate::geom::Box7;

/// Per-point class index.
pub type Label = u16;

/// Label carried by padded rows and by points that must not be scored.
pub const IGNORE_LABEL: Label = Label::MAX;

/// Fixed-width `[x, y, z, reflectance]` rows; rows past `valid_count` are
/// zero padding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 4]>,
    pub valid_count: usize,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 4]>) -> Self {
        let valid_count = points.len();
        PointCloud {
            points,
            valid_count,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn valid(&self) -> &[[f64; 4]] {
        &self.points[..self.valid_count]
    }

    pub fn xyz(&self, i: usize) -> [f64; 3] {
        let p = self.points[i];
        [p[0], p[1], p[2]]
    }

    /// Containment mask over all rows; padded rows are always outside.
    pub fn points_in_box(&self, b: &Box7) -> Vec<bool> {
        let mut mask = crate::geom::points_in_box(&self.points, b);
        for m in &mut mask[self.valid_count..] {
            *m = false;
        }
        mask
    }

    /// Checks the padding contract: finite values and all-zero padded rows.
    pub fn check(&self) -> bool {
        self.valid_count <= self.points.len()
            && self.points.iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self.points[self.valid_count..]
                .iter()
                .all(|p| p.iter().all(|v| *v == 0.0))
    }
}

/// Box with its class index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: Box7,
    pub class: Label,
}

/// Ordered class names plus the group of geometrically similar vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTable {
    pub names: Vec<String>,
    /// Indices of the vehicle classes that share shape features.
    pub vehicle_group: Vec<Label>,
    /// Class whose boxes the detection corpus exposes.
    pub detect_class: Label,
}

impl ClassTable {
    pub const GROUND: Label = 0;
    pub const BUILDING: Label = 1;
    pub const POLE: Label = 2;
    pub const FENCE: Label = 3;
    pub const CAR: Label = 4;
    pub const TRUCK: Label = 5;
    pub const OTHER_VEHICLE: Label = 6;
    pub const PEDESTRIAN: Label = 7;

    /// The eight-class table used by the synthetic corpus.
    pub fn synthetic() -> Self {
        ClassTable {
            names: [
                "ground",
                "building",
                "pole",
                "fence",
                "car",
                "truck",
                "other-vehicle",
                "pedestrian",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            vehicle_group: vec![Self::CAR, Self::TRUCK, Self::OTHER_VEHICLE],
            detect_class: Self::CAR,
        }
    }

    /// The 19-class table of the remapped SemanticKITTI label space.
    pub fn semantickitti() -> Self {
        ClassTable {
            names: crate::data::semantickitti::CLASS_NAMES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vehicle_group: vec![0, 3, 4],
            detect_class: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, c: Label) -> &str {
        self.names
            .get(c as usize)
            .map(|s| s.as_str())
            .unwrap_or("ignore")
    }

    pub fn index_of(&self, name: &str) -> Option<Label> {
        self.names.iter().position(|n| n == name).map(|i| i as Label)
    }

    pub fn is_vehicle(&self, c: Label) -> bool {
        self.vehicle_group.contains(&c)
    }
}

/// Generation metadata carried with every scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub seed: u64,
    /// Hex digest of the generator configuration.
    pub generator: String,
}

/// A fully annotated scene: per-point labels and every box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub cloud: PointCloud,
    pub labels: Vec<Label>,
    pub boxes: Vec<LabeledBox>,
    pub meta: SceneMeta,
}

impl Scene {
    pub fn check(&self) -> bool {
        self.cloud.check() && self.labels.len() == self.cloud.valid_count
    }

    /// Number of valid points labeled `class` inside `b`.
    pub fn points_of_class_in(&self, b: &Box7, class: Label) -> usize {
        self.cloud
            .valid()
            .iter()
            .zip(&self.labels)
            .filter(|(p, l)| **l == class && b.contains([p[0], p[1], p[2]]))
            .count()
    }
}
