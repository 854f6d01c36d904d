//! Exact fixed-radius neighbour queries on a uniform grid of buckets.

use std::collections::HashMap;

/// Bucket grid over 3D points; planar data uses `z = 0`.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<usize>>,
    points: Vec<[f64; 3]>,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl GridIndex {
    /// `cell` is the bucket edge length; queries are exact for any radius
    /// but cheapest when `radius <= cell`.
    pub fn new(points: Vec<[f64; 3]>, cell: f64) -> Self {
        let cell = if cell > 0.0 && cell.is_finite() { cell } else { 1.0 };
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(cell, p)).or_default().push(i);
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        Self {
            cell,
            buckets,
            points,
            lo,
            hi,
        }
    }

    pub fn planar(points: impl IntoIterator<Item = (f64, f64)>, cell: f64) -> Self {
        Self::new(points.into_iter().map(|(x, y)| [x, y, 0.0]).collect(), cell)
    }

    fn key(cell: f64, p: &[f64; 3]) -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Indices of points within `radius` (inclusive) of `q`, ascending.
    pub fn within(&self, q: [f64; 3], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Nearest point accepted by `keep`, ties to the lower index.
    pub fn nearest(&self, q: [f64; 3], keep: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        // beyond this radius every point has been examined
        let far = (0..3)
            .map(|d| (q[d] - self.lo[d]).abs().max((q[d] - self.hi[d]).abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        let offer = |best: &mut Option<(usize, f64)>, i: usize, d: f64| {
            if keep(i) && best.is_none_or(|(bi, bd)| d < bd || (d == bd && i < bi)) {
                *best = Some((i, d));
            }
        };
        let mut best = None;
        let mut r = self.cell;
        while r < far {
            self.for_each_within(q, r, |i, d| offer(&mut best, i, d));
            if best.is_some() {
                return best;
            }
            r *= 2.0;
        }
        // rounding in `far` could drop the farthest point, so finish linearly
        for (i, p) in self.points.iter().enumerate() {
            offer(&mut best, i, dist(p, &q));
        }
        best
    }

    pub fn for_each_within(&self, q: [f64; 3], radius: f64, mut f: impl FnMut(usize, f64)) {
        if radius < 0.0 {
            return;
        }
        let reach = (radius / self.cell).ceil() as i64;
        let c = Self::key(self.cell, &q);
        let r2 = radius * radius;
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if let Some(ids) = self.buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &i in ids {
                            let d2 = dist2(&self.points[i], &q);
                            if d2 <= r2 {
                                f(i, d2.sqrt());
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    dist2(a, b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn grid_matches_brute_force(
            pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0), 1..80),
            q in (-50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0),
            radius in 0.0f64..30.0,
            cell in 0.5f64..20.0,
        ) {
            let points: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x, y, z]).collect();
            let q = [q.0, q.1, q.2];
            let idx = GridIndex::new(points.clone(), cell);
            let want: Vec<usize> = (0..points.len())
                .filter(|&i| dist2(&points[i], &q) <= radius * radius)
                .collect();
            prop_assert_eq!(idx.within(q, radius), want);
        }

        #[test]
        fn nearest_matches_brute_force(
            pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0), 0..60),
            q in (-80.0f64..80.0, -80.0f64..80.0, -5.0f64..5.0),
            cell in 0.5f64..20.0,
        ) {
            let points: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x, y, z]).collect();
            let q = [q.0, q.1, q.2];
            let idx = GridIndex::new(points.clone(), cell);
            let keep = |i: usize| i % 3 != 0;
            let want = (0..points.len())
                .filter(|&i| keep(i))
                .map(|i| dist(&points[i], &q))
                .min_by(f64::total_cmp);
            prop_assert_eq!(idx.nearest(q, keep).map(|b| b.1), want);
        }
    }
}
