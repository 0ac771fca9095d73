use serde::{Deserialize, Serialize};

use super::{normalize_angle, Box7};

/// Containment mask for `[x, y, z, reflectance]` rows. Points on a face
/// count as inside.
pub fn points_in_box(points: &[[f64; 4]], b: &Box7) -> Vec<bool> {
    points
        .iter()
        .map(|p| b.contains([p[0], p[1], p[2]]))
        .collect()
}

/// Flip across the forward axis, then yaw rotation about the elevation axis,
/// then isotropic scaling. Reflectance is never touched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Radians; positive values increase box yaw.
    pub rotation: f64,
    pub scale: f64,
    /// Negates `x` before rotating.
    pub flip: bool,
}

impl Default for RigidTransform {
    fn default() -> Self {
        RigidTransform {
            rotation: 0.0,
            scale: 1.0,
            flip: false,
        }
    }
}

impl RigidTransform {
    pub fn new(rotation: f64, scale: f64, flip: bool) -> Self {
        assert!(scale > 0.0, "scale must be positive");
        RigidTransform {
            rotation,
            scale,
            flip,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && self.scale == 1.0 && !self.flip
    }

    pub fn apply_xyz(&self, p: [f64; 3]) -> [f64; 3] {
        let x = if self.flip { -p[0] } else { p[0] };
        let (s, c) = self.rotation.sin_cos();
        [
            self.scale * (x * c + p[2] * s),
            self.scale * p[1],
            self.scale * (-x * s + p[2] * c),
        ]
    }

    pub fn invert_xyz(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.rotation.sin_cos();
        let (x, y, z) = (p[0] / self.scale, p[1] / self.scale, p[2] / self.scale);
        let rx = x * c - z * s;
        let rz = x * s + z * c;
        [if self.flip { -rx } else { rx }, y, rz]
    }

    pub fn apply_points(&self, points: &mut [[f64; 4]]) {
        for p in points {
            let q = self.apply_xyz([p[0], p[1], p[2]]);
            p[0] = q[0];
            p[1] = q[1];
            p[2] = q[2];
        }
    }

    pub fn invert_points(&self, points: &mut [[f64; 4]]) {
        for p in points {
            let q = self.invert_xyz([p[0], p[1], p[2]]);
            p[0] = q[0];
            p[1] = q[1];
            p[2] = q[2];
        }
    }

    pub fn apply_box(&self, b: &Box7) -> Box7 {
        let c = self.apply_xyz(b.center());
        let r = if self.flip { -b.r } else { b.r };
        Box7::new(
            c[0],
            c[1],
            c[2],
            b.h * self.scale,
            b.w * self.scale,
            b.l * self.scale,
            normalize_angle(r + self.rotation),
        )
    }

    pub fn invert_box(&self, b: &Box7) -> Box7 {
        let c = self.invert_xyz(b.center());
        let r = b.r - self.rotation;
        let r = if self.flip { -r } else { r };
        Box7::new(
            c[0],
            c[1],
            c[2],
            b.h / self.scale,
            b.w / self.scale,
            b.l / self.scale,
            normalize_angle(r),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn brute_force_inside(p: [f64; 3], b: &Box7) -> bool {
        // half-plane test against the footprint corners plus an elevation slab
        let c = crate::geom::bev_corners(b);
        let inside_bev = (0..4).all(|i| {
            let (ax, az) = c[i];
            let (bx, bz) = c[(i + 1) % 4];
            (bx - ax) * (p[2] - az) - (bz - az) * (p[0] - ax) >= -1e-12
        });
        inside_bev && p[1] >= b.y - b.h / 2.0 && p[1] <= b.y + b.h / 2.0
    }

    #[test]
    fn center_inside_and_beyond_length_outside() {
        let b = Box7::new(2.0, 0.75, 9.0, 1.5, 1.6, 3.9, 1.1);
        let m = points_in_box(&[[2.0, 0.75, 9.0, 0.3]], &b);
        assert!(m[0]);
        let (hx, hz) = b.heading();
        let e = 1e-6;
        let far = [2.0 + hx * (b.l / 2.0 + e), 0.75, 9.0 + hz * (b.l / 2.0 + e), 0.0];
        assert!(!points_in_box(&[far], &b)[0]);
    }

    #[test]
    fn faces_are_inclusive() {
        let b = Box7::new(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0);
        assert!(points_in_box(&[[1.0, 1.0, 1.0, 0.0]], &b)[0]);
    }

    #[test]
    fn identity_and_full_turn() {
        let p = [[1.5, 0.2, 7.0, 0.4], [-3.0, 1.0, 2.0, 0.9]];
        let mut q = p;
        RigidTransform::default().apply_points(&mut q);
        assert_eq!(p, q);
        let mut q = p;
        RigidTransform::new(TAU, 1.0, false).apply_points(&mut q);
        for (a, b) in p.iter().zip(&q) {
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flip_negates_yaw() {
        let b = Box7::new(1.0, 0.0, 5.0, 1.0, 1.0, 2.0, 0.4);
        let f = RigidTransform::new(0.0, 1.0, true).apply_box(&b);
        assert!((f.x + 1.0).abs() < 1e-12);
        assert!((f.r - (TAU - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn brute_force_oracle_agrees() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let b = Box7::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random_range(1.0..5.0),
                rng.random_range(0.0..TAU),
            );
            let p = [
                rng.random_range(-5.0..5.0),
                rng.random_range(-1.0..2.0),
                rng.random_range(-5.0..5.0),
            ];
            assert_eq!(points_in_box(&[[p[0], p[1], p[2], 0.0]], &b)[0], brute_force_inside(p, &b));
        }
    }

    proptest! {
        #[test]
        fn inverse_recovers_input(
            rot in -3.2f64..3.2, scale in 0.5f64..2.0, flip: bool,
            x in -40.0f64..40.0, y in -2.0f64..3.0, z in 0.0f64..70.0,
        ) {
            let t = RigidTransform::new(rot, scale, flip);
            let q = t.invert_xyz(t.apply_xyz([x, y, z]));
            prop_assert!((q[0] - x).abs() < 1e-6 && (q[1] - y).abs() < 1e-6 && (q[2] - z).abs() < 1e-6);
            let b = Box7::new(x, y, z, 1.5, 1.6, 3.9, rot.abs());
            let bb = t.invert_box(&t.apply_box(&b));
            prop_assert!((bb.x - b.x).abs() < 1e-6 && (bb.l - b.l).abs() < 1e-6);
            prop_assert!(crate::geom::wrap_pi(bb.r - b.r).abs() < 1e-9);
        }

        #[test]
        fn containment_survives_transform(
            rot in -0.5f64..0.5, scale in 0.9f64..1.1, flip: bool,
            px in -3.0f64..3.0, py in -1.0f64..1.0, pz in -3.0f64..3.0, r in 0.0f64..6.28,
        ) {
            let t = RigidTransform::new(rot, scale, flip);
            let b = Box7::new(0.3, 0.0, 1.0, 1.5, 1.6, 3.9, r);
            let p = [px, py, pz];
            // keep away from faces where rounding can flip the answer
            let q = b.to_local(p);
            let margin = (b.l / 2.0 - q[0].abs()).abs().min((b.w / 2.0 - q[2].abs()).abs()).min((b.h / 2.0 - q[1].abs()).abs());
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(b.contains(p), t.apply_box(&b).contains(t.apply_xyz(p)));
        }
    }
}
