//! Bin-based box codec.
//!
//! A transverse center offset `k` in `[-S, S)` is split into a bin index and
//! a residual inside that bin so that `k = δ·(bin + 1/2) + res − S`. Yaw is
//! split the same way over `[0, 2π)` with `r = α·bin + res`, bins centred on
//! multiples of `α`. Elevation offset and size (relative to the mean anchor)
//! are regressed directly.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{normalize_angle, wrap_pi, Box7};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoxCodecConfig {
    /// Half-extent of the search area around each point, in meters.
    pub scope: f64,
    /// Center bin width, in meters.
    pub bin_delta: f64,
    pub num_center_bins: usize,
    /// Yaw bin width, in radians.
    pub rot_alpha: f64,
    pub num_rot_bins: usize,
    /// Mean anchor size `(h, w, l)`.
    pub anchor_hwl: [f64; 3],
}

impl Default for BoxCodecConfig {
    fn default() -> Self {
        BoxCodecConfig::new(3.0, 0.5, 12, [1.5, 1.6, 3.9])
    }
}

impl BoxCodecConfig {
    /// Derives bin counts from the scope, the bin width and the number of
    /// yaw bins.
    pub fn new(scope: f64, bin_delta: f64, num_rot_bins: usize, anchor_hwl: [f64; 3]) -> Self {
        BoxCodecConfig {
            scope,
            bin_delta,
            num_center_bins: (2.0 * scope / bin_delta).round() as usize,
            rot_alpha: TAU / num_rot_bins as f64,
            num_rot_bins,
            anchor_hwl,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.scope > 0.0
            && self.bin_delta > 0.0
            && self.rot_alpha > 0.0
            && self.num_center_bins > 0
            && self.num_rot_bins > 0
            && self.anchor_hwl.iter().all(|v| *v > 0.0);
        if !positive {
            return Err(Error::Config("box codec values must be positive".into()));
        }
        if self.num_center_bins != (2.0 * self.scope / self.bin_delta).round() as usize {
            return Err(Error::Config(format!(
                "num_center_bins {} inconsistent with 2·scope/bin_delta = {}",
                self.num_center_bins,
                2.0 * self.scope / self.bin_delta
            )));
        }
        if self.num_rot_bins != (TAU / self.rot_alpha).round() as usize {
            return Err(Error::Config(format!(
                "num_rot_bins {} inconsistent with 2π/rot_alpha",
                self.num_rot_bins
            )));
        }
        Ok(())
    }

    /// Number of per-point detection channels this codec needs.
    pub fn det_channels(&self) -> usize {
        2 * self.num_center_bins + self.num_rot_bins + 8
    }

    pub fn encode_center(&self, offset: f64) -> Result<(usize, f64)> {
        if !(offset >= -self.scope && offset < self.scope) {
            return Err(Error::OutOfScope {
                offset,
                scope: self.scope,
            });
        }
        let raw = ((offset + self.scope) / self.bin_delta).floor();
        // guard rounding at the upper edge of the scope
        let bin = (raw.max(0.0) as usize).min(self.num_center_bins - 1);
        let res = offset - (self.bin_delta * (bin as f64 + 0.5) - self.scope);
        Ok((bin, res))
    }

    pub fn decode_center(&self, bin: usize, res: f64) -> Result<f64> {
        if bin >= self.num_center_bins {
            return Err(Error::BinIndex {
                index: bin,
                num_bins: self.num_center_bins,
            });
        }
        Ok(self.bin_delta * (bin as f64 + 0.5) + res - self.scope)
    }

    pub fn encode_rotation(&self, r: f64) -> (usize, f64) {
        let r = normalize_angle(r);
        let n = self.num_rot_bins;
        let mut bin = ((r + self.rot_alpha / 2.0) / self.rot_alpha).floor() as usize % n;
        let mut res = wrap_pi(r - self.rot_alpha * bin as f64);
        // residual interval is half-open: (-α/2, α/2]
        if res <= -self.rot_alpha / 2.0 {
            bin = (bin + n - 1) % n;
            res += self.rot_alpha;
        }
        (bin, res)
    }

    pub fn decode_rotation(&self, bin: usize, res: f64) -> f64 {
        normalize_angle(self.rot_alpha * (bin % self.num_rot_bins) as f64 + res)
    }

    /// Encodes a ground-truth box relative to a point inside it.
    pub fn encode_box(&self, point: [f64; 3], gt: &Box7) -> Result<BinTarget> {
        let (x_bin, x_res) = self.encode_center(gt.x - point[0])?;
        let (z_bin, z_res) = self.encode_center(gt.z - point[2])?;
        let (r_bin, r_res) = self.encode_rotation(gt.r);
        Ok(BinTarget {
            x_bin,
            z_bin,
            r_bin,
            x_res,
            z_res,
            r_res,
            y_off: gt.y - point[1],
            hwl_res: [
                gt.h - self.anchor_hwl[0],
                gt.w - self.anchor_hwl[1],
                gt.l - self.anchor_hwl[2],
            ],
        })
    }

    /// Inverse of [`BoxCodecConfig::encode_box`].
    pub fn decode_target(&self, point: [f64; 3], t: &BinTarget) -> Result<Box7> {
        let dx = self.decode_center(t.x_bin, t.x_res)?;
        let dz = self.decode_center(t.z_bin, t.z_res)?;
        if t.r_bin >= self.num_rot_bins {
            return Err(Error::BinIndex {
                index: t.r_bin,
                num_bins: self.num_rot_bins,
            });
        }
        Ok(Box7::new(
            point[0] + dx,
            point[1] + t.y_off,
            point[2] + dz,
            self.anchor_hwl[0] + t.hwl_res[0],
            self.anchor_hwl[1] + t.hwl_res[1],
            self.anchor_hwl[2] + t.hwl_res[2],
            self.decode_rotation(t.r_bin, t.r_res),
        ))
    }

    /// Decodes one row of detection-head output for the point that produced
    /// it. Channel layout: x-bin logits, z-bin logits, x residual, z residual,
    /// y offset, yaw-bin logits, yaw residual, `(h, w, l)` residuals,
    /// objectness. Center and yaw residuals are normalized by half a bin.
    pub fn decode_row(&self, point: [f64; 3], row: &[f64]) -> DecodedBox {
        let layout = DetLayout::new(self);
        debug_assert_eq!(row.len(), layout.total);
        let x_bin = argmax(&row[layout.x_bins.clone()]);
        let z_bin = argmax(&row[layout.z_bins.clone()]);
        let r_bin = argmax(&row[layout.r_bins.clone()]);
        let half = self.bin_delta / 2.0;
        let target = BinTarget {
            x_bin,
            z_bin,
            r_bin,
            x_res: row[layout.x_res] * half,
            z_res: row[layout.z_res] * half,
            r_res: row[layout.r_res] * self.rot_alpha / 2.0,
            y_off: row[layout.y_off],
            hwl_res: [row[layout.hwl], row[layout.hwl + 1], row[layout.hwl + 2]],
        };
        let mut b = self
            .decode_target(point, &target)
            .expect("argmax bins are always in range");
        let mut degenerate = false;
        for v in [&mut b.h, &mut b.w, &mut b.l] {
            if !(*v > MIN_DIM) {
                *v = MIN_DIM;
                degenerate = true;
            }
        }
        DecodedBox {
            bbox: b,
            objectness: row[layout.objectness],
            degenerate,
        }
    }
}

/// Smallest box dimension a decoded box is clamped to.
pub const MIN_DIM: f64 = 0.01;

/// A box decoded from head output, with its raw objectness logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedBox {
    pub bbox: Box7,
    pub objectness: f64,
    /// Set when a size residual drove a dimension to or below zero.
    pub degenerate: bool,
}

/// Per-point regression target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinTarget {
    pub x_bin: usize,
    pub z_bin: usize,
    pub r_bin: usize,
    pub x_res: f64,
    pub z_res: f64,
    pub r_res: f64,
    pub y_off: f64,
    pub hwl_res: [f64; 3],
}

/// Column ranges of the detection-head output block.
#[derive(Debug, Clone)]
pub struct DetLayout {
    pub x_bins: std::ops::Range<usize>,
    pub z_bins: std::ops::Range<usize>,
    pub x_res: usize,
    pub z_res: usize,
    pub y_off: usize,
    pub r_bins: std::ops::Range<usize>,
    pub r_res: usize,
    pub hwl: usize,
    pub objectness: usize,
    pub total: usize,
}

impl DetLayout {
    pub fn new(cfg: &BoxCodecConfig) -> Self {
        let nc = cfg.num_center_bins;
        let nr = cfg.num_rot_bins;
        let x_bins = 0..nc;
        let z_bins = nc..2 * nc;
        let x_res = 2 * nc;
        let z_res = x_res + 1;
        let y_off = z_res + 1;
        let r_bins = y_off + 1..y_off + 1 + nr;
        let r_res = r_bins.end;
        let hwl = r_res + 1;
        let objectness = hwl + 3;
        DetLayout {
            x_bins,
            z_bins,
            x_res,
            z_res,
            y_off,
            r_bins,
            r_res,
            hwl,
            objectness,
            total: objectness + 1,
        }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
