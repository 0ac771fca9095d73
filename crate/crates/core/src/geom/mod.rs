//! Closed-form geometry shared by the data pipeline, the detection head and
//! the evaluation code.
//!
//! Frame convention used everywhere in this crate: `y` is the elevation axis
//! (up), `z` points forward and `x` points left, which makes the frame
//! right-handed and a cyclic relabeling of the usual LiDAR axes
//! (`x = lidar_y`, `y = lidar_z`, `z = lidar_x`). The x–z plane is the
//! bird's-eye view (BEV) plane.
//!
//! A box with yaw `r` has its heading (length axis) along `(sin r, cos r)` in
//! `(x, z)`; `r = 0` faces forward. Length runs along the heading, width
//! across it and height along the elevation axis.

mod codec;
mod iou;
mod nms;
mod transform;

use serde::{Deserialize, Serialize};

pub use codec::{BinTarget, BoxCodecConfig, DecodedBox, DetLayout};
pub use iou::{bev_corners, bev_intersection_area, bev_iou, iou_3d, polygon_area};
pub use nms::nms_bev;
pub use transform::{points_in_box, RigidTransform};

use std::f64::consts::TAU;

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(r: f64) -> f64 {
    let w = r.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(r: f64) -> f64 {
    let w = normalize_angle(r);
    if w > std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

/// Oriented 3D box with seven degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box7 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub h: f64,
    pub w: f64,
    pub l: f64,
    pub r: f64,
}

impl Box7 {
    /// Builds a box, wrapping the yaw into `[0, 2π)`.
    pub fn new(x: f64, y: f64, z: f64, h: f64, w: f64, l: f64, r: f64) -> Self {
        Box7 {
            x,
            y,
            z,
            h,
            w,
            l,
            r: normalize_angle(r),
        }
    }

    pub fn center(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_valid(&self) -> bool {
        self.h > 0.0
            && self.w > 0.0
            && self.l > 0.0
            && [self.x, self.y, self.z, self.h, self.w, self.l, self.r]
                .iter()
                .all(|v| v.is_finite())
    }

    pub fn bev_area(&self) -> f64 {
        self.w.max(0.0) * self.l.max(0.0)
    }

    pub fn volume(&self) -> f64 {
        self.bev_area() * self.h.max(0.0)
    }

    /// Unit heading vector in the BEV plane as `(x, z)`.
    pub fn heading(&self) -> (f64, f64) {
        (self.r.sin(), self.r.cos())
    }

    /// Expresses a world point in the box frame as `(along, up, across)`.
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let dx = p[0] - self.x;
        let dz = p[2] - self.z;
        let (s, c) = self.r.sin_cos();
        [dx * s + dz * c, p[1] - self.y, dx * c - dz * s]
    }

    /// Inverse of [`Box7::to_local`].
    pub fn to_world(&self, q: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.r.sin_cos();
        [
            self.x + q[0] * s + q[2] * c,
            self.y + q[1],
            self.z + q[0] * c - q[2] * s,
        ]
    }

    /// Elevation of the bottom face.
    pub fn bottom(&self) -> f64 {
        self.y - self.h / 2.0
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let q = self.to_local(p);
        q[0].abs() <= self.l / 2.0 && q[1].abs() <= self.h / 2.0 && q[2].abs() <= self.w / 2.0
    }

    /// True if the point falls within the box footprint, ignoring elevation.
    pub fn contains_bev(&self, p: [f64; 3]) -> bool {
        let q = self.to_local(p);
        q[0].abs() <= self.l / 2.0 && q[2].abs() <= self.w / 2.0
    }
}
