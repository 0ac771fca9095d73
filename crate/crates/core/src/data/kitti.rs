//! KITTI object-benchmark formats: Velodyne scans, `label_2` object rows and
//! `calib` files, plus the camera ↔ LiDAR box conversion.

use std::f64::consts::FRAC_PI_2;

use super::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{normalize_angle, wrap_pi, Box7};

const POINT_BYTES: usize = 16;

/// Parses packed little-endian `f32 × 4` rows (x, y, z, reflectance).
pub fn parse_velodyne_bin(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % POINT_BYTES != 0 {
        return Err(Error::ByteFormat {
            offset: bytes.len() - bytes.len() % POINT_BYTES,
            msg: format!(
                "velodyne scan length {} is not a multiple of {POINT_BYTES}",
                bytes.len()
            ),
        });
    }
    let points = bytes
        .chunks_exact(POINT_BYTES)
        .map(|row| {
            let mut p = [0.0; 4];
            for (k, v) in p.iter_mut().enumerate() {
                let w: [u8; 4] = row[4 * k..4 * k + 4].try_into().expect("4-byte slice");
                *v = f32::from_le_bytes(w) as f64;
            }
            p
        })
        .collect();
    Ok(PointCloud::new(points))
}

/// Writes the valid rows back as packed little-endian `f32 × 4`.
pub fn serialize_velodyne_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.valid_count * POINT_BYTES);
    for p in cloud.valid() {
        for v in p {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Relabels LiDAR axes (x forward, y left, z up) into the crate frame.
pub fn lidar_to_sensor(p: [f64; 3]) -> [f64; 3] {
    [p[1], p[2], p[0]]
}

pub fn sensor_to_lidar(p: [f64; 3]) -> [f64; 3] {
    [p[2], p[0], p[1]]
}

/// Converts a raw scan in LiDAR axes into the crate frame.
pub fn cloud_from_lidar(mut cloud: PointCloud) -> PointCloud {
    for p in &mut cloud.points {
        let q = lidar_to_sensor([p[0], p[1], p[2]]);
        p[..3].copy_from_slice(&q);
    }
    cloud
}

/// One row of a KITTI `label_2` file.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiObject {
    pub kind: String,
    pub truncated: f64,
    pub occluded: i32,
    pub alpha: f64,
    pub bbox2d: [f64; 4],
    /// Height, width, length in meters.
    pub dims: [f64; 3],
    /// Bottom-center location in rectified camera coordinates.
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl KittiObject {
    /// Class after merging vans into cars.
    pub fn merged_kind(&self) -> &str {
        if self.kind == "Van" {
            "Car"
        } else {
            &self.kind
        }
    }
}

pub fn parse_kitti_object_labels(text: &str) -> Result<Vec<KittiObject>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 15 && fields.len() != 16 {
            return Err(Error::LineFormat {
                line: line_no,
                msg: format!("expected 15 or 16 fields, found {}", fields.len()),
            });
        }
        let num = |k: usize| -> Result<f64> {
            fields[k].parse::<f64>().map_err(|e| Error::LineFormat {
                line: line_no,
                msg: format!("field {k} ({:?}): {e}", fields[k]),
            })
        };
        let occluded = fields[2].parse::<i32>().map_err(|e| Error::LineFormat {
            line: line_no,
            msg: format!("occlusion field ({:?}): {e}", fields[2]),
        })?;
        out.push(KittiObject {
            kind: fields[0].to_string(),
            truncated: num(1)?,
            occluded,
            alpha: num(3)?,
            bbox2d: [num(4)?, num(5)?, num(6)?, num(7)?],
            dims: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 { Some(num(15)?) } else { None },
        });
    }
    Ok(out)
}

/// Writes rows in the two-decimal layout of the benchmark files.
pub fn serialize_kitti_object_labels(objects: &[KittiObject]) -> String {
    let mut s = String::new();
    for o in objects {
        s.push_str(&format!(
            "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
            o.kind,
            o.truncated,
            o.occluded,
            o.alpha,
            o.bbox2d[0],
            o.bbox2d[1],
            o.bbox2d[2],
            o.bbox2d[3],
            o.dims[0],
            o.dims[1],
            o.dims[2],
            o.location[0],
            o.location[1],
            o.location[2],
            o.rotation_y
        ));
        if let Some(score) = o.score {
            s.push_str(&format!(" {score:.2}"));
        }
        s.push('\n');
    }
    s
}

/// Calibration entries in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiCalib {
    pub entries: Vec<(String, Vec<f64>)>,
}

pub fn parse_kitti_calib(text: &str) -> Result<KittiCalib> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            return Err(Error::LineFormat {
                line: i + 1,
                msg: "missing ':' separator".into(),
            });
        };
        let values = rest
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| Error::LineFormat {
                    line: i + 1,
                    msg: format!("{t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        entries.push((key.trim().to_string(), values));
    }
    let calib = KittiCalib { entries };
    calib.r0_rect()?;
    calib.tr_velo_to_cam()?;
    Ok(calib)
}

/// `%.12e` as printed by C, e.g. `7.215377000000e+02`.
fn fmt_sci(v: f64) -> String {
    let s = format!("{v:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", exp.abs())
}

pub fn serialize_kitti_calib(calib: &KittiCalib) -> String {
    let mut s = String::new();
    for (k, vals) in &calib.entries {
        s.push_str(k);
        s.push(':');
        for v in vals {
            s.push(' ');
            s.push_str(&fmt_sci(*v));
        }
        s.push('\n');
    }
    s
}

type Mat3 = [[f64; 3]; 3];

fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn invert3(m: &Mat3) -> Result<Mat3> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return Err(Error::Data("singular calibration matrix".into()));
    }
    let inv = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            // adjugate: transpose of the cofactor matrix
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            *v = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) * inv;
        }
    }
    Ok(out)
}

impl KittiCalib {
    /// Calibration whose extrinsics are the nominal axis permutation between
    /// LiDAR and camera, with identity rectification.
    pub fn nominal() -> Self {
        KittiCalib {
            entries: vec![
                (
                    "R0_rect".into(),
                    vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                ),
                (
                    "Tr_velo_to_cam".into(),
                    vec![0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                ),
            ],
        }
    }

    pub fn identity() -> Self {
        KittiCalib {
            entries: vec![
                (
                    "R0_rect".into(),
                    vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
                ),
                (
                    "Tr_velo_to_cam".into(),
                    vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
                ),
            ],
        }
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
    }

    pub fn r0_rect(&self) -> Result<Mat3> {
        let v = self
            .get("R0_rect")
            .filter(|v| v.len() == 9)
            .ok_or_else(|| Error::Data("calib lacks a 9-value R0_rect".into()))?;
        Ok([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    /// Rotation and translation of the 3×4 `Tr_velo_to_cam`.
    pub fn tr_velo_to_cam(&self) -> Result<(Mat3, [f64; 3])> {
        let v = self
            .get("Tr_velo_to_cam")
            .filter(|v| v.len() == 12)
            .ok_or_else(|| Error::Data("calib lacks a 12-value Tr_velo_to_cam".into()))?;
        Ok((
            [[v[0], v[1], v[2]], [v[4], v[5], v[6]], [v[8], v[9], v[10]]],
            [v[3], v[7], v[11]],
        ))
    }

    /// Rectified camera point → LiDAR point.
    pub fn rect_to_velo(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let r0_inv = invert3(&self.r0_rect()?)?;
        let (rot, t) = self.tr_velo_to_cam()?;
        let rot_inv = invert3(&rot)?;
        let refp = mat_vec(&r0_inv, p);
        Ok(mat_vec(&rot_inv, [refp[0] - t[0], refp[1] - t[1], refp[2] - t[2]]))
    }

    /// LiDAR point → rectified camera point.
    pub fn velo_to_rect(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let (rot, t) = self.tr_velo_to_cam()?;
        let q = mat_vec(&rot, p);
        Ok(mat_vec(&self.r0_rect()?, [q[0] + t[0], q[1] + t[1], q[2] + t[2]]))
    }

    fn rect_dir_to_velo(&self, d: [f64; 3]) -> Result<[f64; 3]> {
        let r0_inv = invert3(&self.r0_rect()?)?;
        let (rot, _) = self.tr_velo_to_cam()?;
        Ok(mat_vec(&invert3(&rot)?, mat_vec(&r0_inv, d)))
    }

    fn velo_dir_to_rect(&self, d: [f64; 3]) -> Result<[f64; 3]> {
        let (rot, _) = self.tr_velo_to_cam()?;
        Ok(mat_vec(&self.r0_rect()?, mat_vec(&rot, d)))
    }
}

/// A converted box with its (van-merged) class name.
#[derive(Debug, Clone, PartialEq)]
pub struct KittiBox {
    pub class: String,
    pub bbox: Box7,
    pub score: Option<f64>,
}

/// Converts camera-frame objects into boxes in the crate frame (LiDAR axes
/// relabeled so that `y` is up). `DontCare` rows are dropped and vans become
/// cars.
pub fn cam_boxes_to_lidar(objects: &[KittiObject], calib: &KittiCalib) -> Result<Vec<KittiBox>> {
    let mut out = Vec::new();
    for o in objects.iter().filter(|o| o.kind != "DontCare") {
        let [h, w, l] = o.dims;
        let mut c = calib.rect_to_velo(o.location)?;
        c[2] += h / 2.0;
        let heading_cam = [o.rotation_y.cos(), 0.0, -o.rotation_y.sin()];
        let hv = calib.rect_dir_to_velo(heading_cam)?;
        let yaw = hv[1].atan2(hv[0]);
        let s = lidar_to_sensor(c);
        out.push(KittiBox {
            class: o.merged_kind().to_string(),
            bbox: Box7::new(s[0], s[1], s[2], h, w, l, yaw),
            score: o.score,
        });
    }
    Ok(out)
}

/// Inverse of [`cam_boxes_to_lidar`]; the 2D box is left at zero.
pub fn lidar_boxes_to_cam(boxes: &[KittiBox], calib: &KittiCalib) -> Result<Vec<KittiObject>> {
    let mut out = Vec::new();
    for kb in boxes {
        let b = &kb.bbox;
        let mut c = sensor_to_lidar(b.center());
        c[2] -= b.h / 2.0;
        let loc = calib.velo_to_rect(c)?;
        let hv = [b.r.cos(), b.r.sin(), 0.0];
        let hc = calib.velo_dir_to_rect(hv)?;
        let ry = wrap_pi((-hc[2]).atan2(hc[0]));
        out.push(KittiObject {
            kind: kb.class.clone(),
            truncated: 0.0,
            occluded: 0,
            alpha: wrap_pi(ry - loc[0].atan2(loc[2])),
            bbox2d: [0.0; 4],
            dims: [b.h, b.w, b.l],
            location: loc,
            rotation_y: ry,
            score: kb.score,
        });
    }
    Ok(out)
}

/// Yaw in the crate frame from a KITTI `rotation_y` under nominal axes.
pub fn nominal_yaw_from_rotation_y(ry: f64) -> f64 {
    normalize_angle(-ry - FRAC_PI_2)
}
