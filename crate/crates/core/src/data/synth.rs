//! Synthetic street scenes that stand in for real LiDAR corpora.
//!
//! Scenes are built from labeled primitives: a flat ground plane at `y = 0`,
//! building facades, pole cylinders, fence strips, pedestrians and vehicle
//! cuboids. Cars dominate the vehicles; trucks and other vehicles share the
//! car shape at larger scale and are much rarer, which reproduces the
//! "rare but geometrically similar" setting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cloud::{ClassTable, Label, LabeledBox, PointCloud, Scene, SceneMeta};
use crate::error::{Error, Result};
use crate::geom::{bev_iou, Box7};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    /// Closest forward distance of generated content, meters.
    pub min_forward: f64,
    pub max_forward: f64,
    /// Half-angle of the generated wedge; wider than the camera crop.
    pub half_angle_deg: f64,
    /// Vehicles are placed with their whole footprint inside this wedge.
    pub vehicle_half_angle_deg: f64,
    /// Vehicles keep their footprint within `|x| <= road_half_width`.
    pub road_half_width: f64,
    pub ground_points: usize,
    pub building_points: usize,
    pub fence_points: usize,
    pub poles_mean: f64,
    pub pedestrians_mean: f64,
    pub cars_mean: f64,
    pub trucks_mean: f64,
    pub other_vehicles_mean: f64,
    /// Fraction of cars drawn from the larger van size mode.
    pub van_fraction: f64,
    /// Points on a car-sized vehicle 10 m away.
    pub vehicle_points_at_10m: f64,
    pub min_points_per_box: usize,
    pub max_points_per_box: usize,
    pub noise_sigma: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            min_forward: 3.0,
            max_forward: 40.0,
            half_angle_deg: 55.0,
            vehicle_half_angle_deg: 42.0,
            road_half_width: 5.2,
            ground_points: 1800,
            building_points: 600,
            fence_points: 250,
            poles_mean: 3.0,
            pedestrians_mean: 2.0,
            cars_mean: 4.0,
            trucks_mean: 0.5,
            other_vehicles_mean: 0.5,
            van_fraction: 0.2,
            vehicle_points_at_10m: 220.0,
            min_points_per_box: 20,
            max_points_per_box: 500,
            noise_sigma: 0.03,
        }
    }
}

impl GenConfig {
    /// Short hex digest identifying this configuration.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let d = Sha256::digest(&json);
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn has_vehicles(&self) -> bool {
        self.cars_mean > 0.0 || self.trucks_mean > 0.0 || self.other_vehicles_mean > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.min_forward > 0.0
            && self.max_forward > self.min_forward
            && self.half_angle_deg > 0.0
            && self.half_angle_deg < 90.0
            && self.vehicle_half_angle_deg > 0.0
            && self.vehicle_half_angle_deg < 90.0
            && self.noise_sigma >= 0.0
            && self.min_points_per_box <= self.max_points_per_box
            && (0.0..=1.0).contains(&self.van_fraction)
            && [
                self.poles_mean,
                self.pedestrians_mean,
                self.cars_mean,
                self.trucks_mean,
                self.other_vehicles_mean,
            ]
            .iter()
            .all(|m| m.is_finite() && *m >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid generator configuration".into()))
        }
    }
}

/// Inward offset applied to object surface points.
const FACE_MARGIN: f64 = 1e-4;

struct Builder<'a> {
    cfg: &'a GenConfig,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    points: Vec<[f64; 4]>,
    labels: Vec<Label>,
}

impl Builder<'_> {
    fn push(&mut self, p: [f64; 3], refl: f64, label: Label) {
        self.points.push([p[0], p[1], p[2], refl.clamp(0.0, 1.0)]);
        self.labels.push(label);
    }

    fn jitter(&mut self) -> f64 {
        self.noise.sample(&mut self.rng)
    }

    fn count(&mut self, mean: f64) -> usize {
        if mean <= 0.0 {
            return 0;
        }
        let p = Poisson::new(mean).expect("positive mean");
        p.sample(&mut self.rng) as usize
    }

    fn ground(&mut self) {
        let ha = self.cfg.half_angle_deg.to_radians();
        let (r0, r1) = (self.cfg.min_forward, self.cfg.max_forward / ha.cos());
        for _ in 0..self.cfg.ground_points {
            // log-uniform range gives the 1/r² areal falloff of a spinning sensor
            let u: f64 = self.rng.random();
            let r = r0 * (r1 / r0).powf(u);
            let a = self.rng.random_range(-ha..ha);
            let y = self.jitter();
            let refl = self.rng.random_range(0.05..0.3);
            self.push([r * a.sin(), y, r * a.cos()], refl, ClassTable::GROUND);
        }
    }

    fn buildings(&mut self) {
        if self.cfg.building_points == 0 {
            return;
        }
        let mut facades = Vec::new();
        for side in [1.0, -1.0] {
            let x = side * self.rng.random_range(10.0..15.0);
            let mut z = self.rng.random_range(0.0..8.0);
            while z < self.cfg.max_forward {
                let len = self.rng.random_range(8.0..20.0);
                let height = self.rng.random_range(4.0..10.0);
                facades.push((x + side * self.rng.random_range(0.0..2.0), z, z + len, height));
                z += len + self.rng.random_range(0.0..4.0);
            }
        }
        let total: f64 = facades.iter().map(|f| (f.2 - f.1) * f.3).sum();
        for &(x, z0, z1, h) in &facades {
            let n = (self.cfg.building_points as f64 * (z1 - z0) * h / total).round() as usize;
            for _ in 0..n {
                let z = self.rng.random_range(z0..z1);
                let y = self.rng.random_range(0.0..h);
                let jx = self.jitter();
                let refl = self.rng.random_range(0.2..0.6);
                self.push([x + jx, y, z], refl, ClassTable::BUILDING);
            }
        }
    }

    fn poles(&mut self) {
        let n = self.count(self.cfg.poles_mean);
        for _ in 0..n {
            let side = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let cx = side * self.rng.random_range(5.8..8.0);
            let cz = self.rng.random_range(self.cfg.min_forward + 2.0..self.cfg.max_forward);
            let h = self.rng.random_range(3.5..6.0);
            let d = (cx * cx + cz * cz).sqrt();
            let pts = ((60.0 * 10.0 / d).round() as usize).clamp(15, 120);
            for _ in 0..pts {
                let a = self.rng.random_range(0.0..std::f64::consts::TAU);
                let y = self.rng.random_range(0.0..h);
                let (jx, jz) = (self.jitter(), self.jitter());
                let refl = self.rng.random_range(0.3..0.7);
                self.push([cx + 0.12 * a.sin() + jx, y, cz + 0.12 * a.cos() + jz], refl, ClassTable::POLE);
            }
        }
    }

    fn fence(&mut self) {
        if self.cfg.fence_points == 0 {
            return;
        }
        let side = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = side * self.rng.random_range(6.5..8.5);
        let z0 = self.rng.random_range(self.cfg.min_forward + 3.0..self.cfg.max_forward * 0.6);
        let z1 = (z0 + self.rng.random_range(5.0..15.0)).min(self.cfg.max_forward);
        for _ in 0..self.cfg.fence_points {
            let z = self.rng.random_range(z0..z1);
            let y = self.rng.random_range(0.0..1.2);
            let jx = self.jitter();
            let refl = self.rng.random_range(0.2..0.5);
            self.push([x + jx, y, z], refl, ClassTable::FENCE);
        }
    }

    fn pedestrians(&mut self) {
        let n = self.count(self.cfg.pedestrians_mean);
        for _ in 0..n {
            let side = if self.rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let b = Box7::new(
                side * self.rng.random_range(5.6..7.5),
                0.875,
                self.rng.random_range(self.cfg.min_forward + 2.0..self.cfg.max_forward),
                1.75,
                0.6,
                0.6,
                self.rng.random_range(0.0..std::f64::consts::TAU),
            );
            let d = (b.x * b.x + b.z * b.z).sqrt();
            let pts = ((80.0 * 10.0 / d).round() as usize).clamp(15, 150);
            self.cuboid_surface(&b, pts, ClassTable::PEDESTRIAN, 0.1..0.5);
        }
    }

    /// Samples points on every face but the bottom, noisy and clamped into
    /// the box.
    fn cuboid_surface(&mut self, b: &Box7, n: usize, label: Label, refl: std::ops::Range<f64>) {
        let (l, h, w) = (b.l, b.h, b.w);
        let faces = [l * w, l * h, l * h, w * h, w * h];
        let total: f64 = faces.iter().sum();
        for _ in 0..n {
            let mut pick = self.rng.random_range(0.0..total);
            let mut face = 0;
            while face < faces.len() - 1 && pick >= faces[face] {
                pick -= faces[face];
                face += 1;
            }
            let u = self.rng.random_range(-0.5..0.5);
            let v = self.rng.random_range(-0.5..0.5);
            let mut q = match face {
                0 => [u * l, h / 2.0, v * w],
                1 => [u * l, v * h, w / 2.0],
                2 => [u * l, v * h, -w / 2.0],
                3 => [l / 2.0, v * h, u * w],
                _ => [-l / 2.0, v * h, u * w],
            };
            // stay a hair inside so membership is stable under transforms
            let ext = [l / 2.0 - FACE_MARGIN, h / 2.0 - FACE_MARGIN, w / 2.0 - FACE_MARGIN];
            for k in 0..3 {
                q[k] = (q[k] + self.jitter()).clamp(-ext[k], ext[k]);
            }
            let p = b.to_world(q);
            let r = self.rng.random_range(refl.clone());
            self.push(p, r, label);
        }
    }

    fn vehicle_size(&mut self, class: Label) -> [f64; 3] {
        let jitter = |base: [f64; 3], spread: f64, rng: &mut ChaCha8Rng| {
            [
                base[0] * rng.random_range(1.0 - spread..1.0 + spread),
                base[1] * rng.random_range(1.0 - spread..1.0 + spread),
                base[2] * rng.random_range(1.0 - spread..1.0 + spread),
            ]
        };
        match class {
            ClassTable::CAR => {
                if self.rng.random_bool(self.cfg.van_fraction) {
                    jitter([1.9, 1.8, 4.6], 0.05, &mut self.rng)
                } else {
                    jitter([1.5, 1.6, 3.9], 0.1, &mut self.rng)
                }
            }
            ClassTable::TRUCK => jitter([2.7, 2.0, 7.0], 0.05, &mut self.rng),
            _ => jitter([2.1, 1.8, 5.4], 0.05, &mut self.rng),
        }
    }

    fn place_vehicle(&mut self, hwl: [f64; 3], placed: &[LabeledBox]) -> Option<Box7> {
        let ha = self.cfg.vehicle_half_angle_deg.to_radians();
        let road = self.cfg.road_half_width;
        for _ in 0..50 {
            let yaw = if self.rng.random_bool(0.8) {
                let base = if self.rng.random_bool(0.5) { 0.0 } else { std::f64::consts::PI };
                base + self.rng.random_range(-0.25..0.25)
            } else {
                self.rng.random_range(0.0..std::f64::consts::TAU)
            };
            let b = Box7::new(
                self.rng.random_range(-road..road),
                hwl[0] / 2.0,
                self.rng.random_range(self.cfg.min_forward + 2.0..self.cfg.max_forward - 2.0),
                hwl[0],
                hwl[1],
                hwl[2],
                yaw,
            );
            let corners = crate::geom::bev_corners(&b);
            let inside = corners.iter().all(|&(x, z)| {
                z > self.cfg.min_forward && x.abs() <= road && x.atan2(z).abs() <= ha
            });
            if !inside {
                continue;
            }
            let mut grown = b;
            grown.w += 0.6;
            grown.l += 0.6;
            if placed.iter().all(|o| bev_iou(&grown, &o.bbox) == 0.0) {
                return Some(b);
            }
        }
        None
    }

    fn vehicles(&mut self) -> Vec<LabeledBox> {
        let mut placed: Vec<LabeledBox> = Vec::new();
        let mut wanted: Vec<Label> = Vec::new();
        for (class, mean) in [
            (ClassTable::TRUCK, self.cfg.trucks_mean),
            (ClassTable::OTHER_VEHICLE, self.cfg.other_vehicles_mean),
            (ClassTable::CAR, self.cfg.cars_mean),
        ] {
            let n = self.count(mean);
            wanted.extend(std::iter::repeat_n(class, n));
        }
        for class in wanted {
            let hwl = self.vehicle_size(class);
            let Some(b) = self.place_vehicle(hwl, &placed) else {
                continue;
            };
            let area = 2.0 * (b.l * b.w + b.l * b.h + b.w * b.h);
            let car_area = 2.0 * (3.9 * 1.6 + 3.9 * 1.5 + 1.6 * 1.5);
            let d = (b.x * b.x + b.z * b.z).sqrt();
            let n = (self.cfg.vehicle_points_at_10m * (10.0 / d) * area / car_area).round() as usize;
            let n = n.clamp(self.cfg.min_points_per_box, self.cfg.max_points_per_box);
            self.cuboid_surface(&b, n, class, 0.2..0.9);
            placed.push(LabeledBox { bbox: b, class });
        }
        placed
    }
}

/// Generates one fully annotated scene; a pure function of `(seed, cfg)`.
pub fn synth_scene(seed: u64, cfg: &GenConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
        noise: Normal::new(0.0, cfg.noise_sigma).expect("finite sigma"),
        points: Vec::new(),
        labels: Vec::new(),
    };
    b.ground();
    b.buildings();
    b.poles();
    b.fence();
    b.pedestrians();
    let boxes = b.vehicles();

    let table = ClassTable::synthetic();
    // vehicles occlude whatever else would fall inside their boxes
    let mut points = Vec::with_capacity(b.points.len());
    let mut labels = Vec::with_capacity(b.labels.len());
    for (p, l) in b.points.into_iter().zip(b.labels) {
        let xyz = [p[0], p[1], p[2]];
        if !table.is_vehicle(l) && boxes.iter().any(|v| v.bbox.contains(xyz)) {
            continue;
        }
        points.push(p);
        labels.push(l);
    }
    if points.is_empty() {
        return Err(Error::Generation(format!("seed {seed} produced an empty scene")));
    }
    Ok(Scene {
        cloud: PointCloud::new(points),
        labels,
        boxes,
        meta: SceneMeta {
            seed,
            generator: cfg.digest(),
        },
    })
}
