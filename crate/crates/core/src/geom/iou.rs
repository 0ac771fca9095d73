//! Rotated-rectangle overlap in the BEV plane.

use super::Box7;

const EPS: f64 = 1e-12;

/// Footprint corners as `(x, z)`, counter-clockwise.
pub fn bev_corners(b: &Box7) -> [(f64, f64); 4] {
    let hl = b.l / 2.0;
    let hw = b.w / 2.0;
    let mut out = [(0.0, 0.0); 4];
    for (i, (a, c)) in [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)].iter().enumerate() {
        let p = b.to_world([*a, 0.0, *c]);
        out[i] = (p[0], p[2]);
    }
    if signed_area(&out) < 0.0 {
        out.reverse();
    }
    out
}

fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    s / 2.0
}

/// Absolute area of a simple polygon.
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    signed_area(poly).abs()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Sutherland–Hodgman clipping of `subject` against the convex CCW `clip`.
fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut output: Vec<(f64, f64)> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cur_in = cross(a, b, cur) >= -EPS;
            let prev_in = cross(a, b, prev) >= -EPS;
            if cur_in {
                if !prev_in {
                    if let Some(p) = intersect(prev, cur, a, b) {
                        output.push(p);
                    }
                }
                output.push(cur);
            } else if prev_in {
                if let Some(p) = intersect(prev, cur, a, b) {
                    output.push(p);
                }
            }
        }
    }
    output
}

fn intersect(p: (f64, f64), q: (f64, f64), a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let d1 = (q.0 - p.0, q.1 - p.1);
    let d2 = (b.0 - a.0, b.1 - a.1);
    let denom = d1.0 * d2.1 - d1.1 * d2.0;
    if denom.abs() < EPS {
        return None;
    }
    let t = ((a.0 - p.0) * d2.1 - (a.1 - p.1) * d2.0) / denom;
    Some((p.0 + t * d1.0, p.1 + t * d1.1))
}

/// Area of the intersection of the two footprints.
pub fn bev_intersection_area(a: &Box7, b: &Box7) -> f64 {
    if a.bev_area() <= EPS || b.bev_area() <= EPS {
        return 0.0;
    }
    // cheap rejection on circumscribed circles
    let ra = 0.5 * (a.l * a.l + a.w * a.w).sqrt();
    let rb = 0.5 * (b.l * b.l + b.w * b.w).sqrt();
    let d2 = (a.x - b.x).powi(2) + (a.z - b.z).powi(2);
    if d2 > (ra + rb).powi(2) {
        return 0.0;
    }
    let pa = bev_corners(a);
    let pb = bev_corners(b);
    let clipped = clip_convex(&pa, &pb);
    if clipped.len() < 3 {
        return 0.0;
    }
    polygon_area(&clipped)
}

/// Intersection over union of the two boxes' BEV footprints.
pub fn bev_iou(a: &Box7, b: &Box7) -> f64 {
    let inter = bev_intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.bev_area() + b.bev_area() - inter;
    if union <= EPS {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Intersection over union of the two boxes' volumes: the BEV overlap times
/// the overlap of the vertical extents.
pub fn iou_3d(a: &Box7, b: &Box7) -> f64 {
    let dy = (a.y + a.h / 2.0).min(b.y + b.h / 2.0) - a.bottom().max(b.bottom());
    if dy <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    if union <= EPS {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(x: f64, z: f64, r: f64) -> Box7 {
        Box7::new(x, 0.0, z, 1.0, 1.0, 1.0, r)
    }

    #[test]
    fn volume_iou_matches_sampling() {
        use rand::{Rng, SeedableRng};
        let a = Box7::new(0.0, 0.5, 0.0, 1.0, 2.0, 3.0, 0.3);
        let b = Box7::new(0.4, 0.9, 0.5, 1.2, 1.8, 3.5, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (mut ia, mut ib, mut both) = (0u32, 0u32, 0u32);
        for _ in 0..200_000 {
            let p = [rng.random_range(-3.0..3.5), rng.random_range(-0.2..1.6), rng.random_range(-3.0..3.5)];
            let (x, y) = (a.contains(p), b.contains(p));
            ia += x as u32;
            ib += y as u32;
            both += (x && y) as u32;
        }
        let mc = both as f64 / (ia + ib - both) as f64;
        assert!((iou_3d(&a, &b) - mc).abs() < 0.01, "{} vs {mc}", iou_3d(&a, &b));
        assert!((iou_3d(&a, &a) - 1.0).abs() < 1e-12);
        let above = Box7 { y: 5.0, ..a };
        assert_eq!(iou_3d(&a, &above), 0.0);
        // Same footprint, half the height overlapping: 1/3.
        let half = Box7 { y: 1.0, ..a };
        assert!((iou_3d(&a, &half) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn identical_is_one() {
        let b = Box7::new(3.0, 0.7, 12.0, 1.5, 1.6, 3.9, 0.4);
        assert!((bev_iou(&b, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(bev_iou(&unit(0.0, 0.0, 0.0), &unit(100.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn half_shift_is_one_third() {
        let iou = bev_iou(&unit(0.0, 0.0, 0.0), &unit(0.5, 0.0, 0.0));
        assert!((iou - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_square_inside_square() {
        // a unit square rotated 45° inside a 2×2 square: inter = 1, union = 4
        let big = Box7::new(0.0, 0.0, 0.0, 1.0, 2.0, 2.0, 0.0);
        let small = unit(0.0, 0.0, std::f64::consts::FRAC_PI_4);
        assert!((bev_iou(&big, &small) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_area_is_zero() {
        let flat = Box7::new(0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
        assert_eq!(bev_iou(&flat, &unit(0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn touching_edges_is_zero() {
        let iou = bev_iou(&unit(0.0, 0.0, 0.0), &unit(1.0, 0.0, 0.0));
        assert!(iou.abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(
            x in -3.0f64..3.0, z in -3.0f64..3.0,
            r1 in 0.0f64..6.28, r2 in 0.0f64..6.28,
            w1 in 0.2f64..3.0, l1 in 0.2f64..5.0,
            w2 in 0.2f64..3.0, l2 in 0.2f64..5.0,
        ) {
            let a = Box7::new(0.0, 0.0, 0.0, 1.0, w1, l1, r1);
            let b = Box7::new(x, 0.0, z, 1.0, w2, l2, r2);
            let ab = bev_iou(&a, &b);
            let ba = bev_iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
