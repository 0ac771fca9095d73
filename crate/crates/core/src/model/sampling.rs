//! Point sampling and neighborhood queries used by the set-abstraction and
//! feature-propagation levels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Guard added to neighbor distances before inverting them.
pub const INTERP_EPS: f64 = 1e-8;

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Greedy max-min selection of `m` points.
///
/// The first pick is the point furthest along a direction drawn from
/// `seed`, so the selected *set* does not depend on the order of `xyz`.
/// When `m` exceeds the number of points every point is returned and the
/// tail is padded by cycling through the selection.
pub fn farthest_point_sample(xyz: &[[f64; 3]], m: usize, seed: u64) -> Result<Vec<usize>> {
    if xyz.is_empty() {
        return Err(Error::Data("farthest point sampling on an empty cloud".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = loop {
        let v: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-6 && n2 <= 1.0 {
            break v;
        }
    };
    let proj = |p: [f64; 3]| p[0] * d[0] + p[1] * d[1] + p[2] * d[2];
    let mut first = 0;
    for (i, p) in xyz.iter().enumerate() {
        if proj(*p) > proj(xyz[first]) {
            first = i;
        }
    }
    let n = xyz.len();
    let take = m.min(n);
    let mut chosen = Vec::with_capacity(m);
    let mut min_d = vec![f64::INFINITY; n];
    let mut cur = first;
    for _ in 0..take {
        chosen.push(cur);
        min_d[cur] = -1.0;
        let c = xyz[cur];
        let mut best = usize::MAX;
        let mut best_d = -1.0;
        for (i, p) in xyz.iter().enumerate() {
            if min_d[i] < 0.0 {
                continue;
            }
            let dd = dist2(*p, c);
            if dd < min_d[i] {
                min_d[i] = dd;
            }
            if min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        if best == usize::MAX {
            break;
        }
        cur = best;
    }
    for i in 0..m - take {
        chosen.push(chosen[i % take]);
    }
    Ok(chosen)
}

/// Neighborhoods at several radii around each center, from one distance
/// pass. For every `(radius, k)` the group holds the `k` nearest points
/// within `radius` ordered by distance, padded by repeating the first
/// (nearest) member. Centers are indices into `xyz`, so every group
/// contains at least the center itself. Returns one flat
/// `centers.len() × k` index list per scale.
pub fn ball_query_multi(xyz: &[[f64; 3]], centers: &[usize], scales: &[(f64, usize)]) -> Vec<Vec<u32>> {
    let r_max2 = scales.iter().map(|s| s.0 * s.0).fold(0.0, f64::max);
    let mut out: Vec<Vec<u32>> = scales.iter().map(|s| Vec::with_capacity(centers.len() * s.1)).collect();
    let mut cand: Vec<(f64, u32)> = Vec::new();
    for &c in centers {
        let cp = xyz[c];
        cand.clear();
        for (i, p) in xyz.iter().enumerate() {
            let dd = dist2(*p, cp);
            if dd <= r_max2 {
                cand.push((dd, i as u32));
            }
        }
        cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (s, &(r, k)) in scales.iter().enumerate() {
            let r2 = r * r;
            let group = &mut out[s];
            let start = group.len();
            group.extend(cand.iter().take_while(|c| c.0 <= r2).take(k).map(|c| c.1));
            let first = if group.len() > start { group[start] } else { c as u32 };
            group.resize(start + k, first);
        }
    }
    out
}

/// Single-radius [`ball_query_multi`].
pub fn ball_query(xyz: &[[f64; 3]], centers: &[usize], radius: f64, k: usize) -> Vec<u32> {
    ball_query_multi(xyz, centers, &[(radius, k)]).pop().unwrap_or_default()
}

/// For each `fine` point, its three nearest `coarse` points and normalized
/// inverse-distance weights. With fewer than three coarse points the
/// nearest ones are repeated.
pub fn three_nn(fine: &[[f64; 3]], coarse: &[[f64; 3]]) -> (Vec<[u32; 3]>, Vec<[f64; 3]>) {
    assert!(!coarse.is_empty(), "interpolation needs at least one coarse point");
    let mut idx = Vec::with_capacity(fine.len());
    let mut wts = Vec::with_capacity(fine.len());
    for p in fine {
        let mut best = [(f64::INFINITY, 0u32); 3];
        for (j, q) in coarse.iter().enumerate() {
            let dd = dist2(*p, *q);
            if dd < best[2].0 {
                best[2] = (dd, j as u32);
                if best[2].0 < best[1].0 {
                    best.swap(1, 2);
                    if best[1].0 < best[0].0 {
                        best.swap(0, 1);
                    }
                }
            }
        }
        for k in 1..3 {
            if !best[k].0.is_finite() {
                best[k] = best[k - 1];
            }
        }
        let inv: Vec<f64> = best.iter().map(|b| 1.0 / (b.0.sqrt() + INTERP_EPS)).collect();
        let s: f64 = inv.iter().sum();
        idx.push([best[0].1, best[1].1, best[2].1]);
        wts.push([inv[0] / s, inv[1] / s, inv[2] / s]);
    }
    (idx, wts)
}
