//! Uniform voxel grid with exact radius and nearest-neighbor queries.
//!
//! Points are stored sorted by cell so every cell is a contiguous slice.
//! Small bounding boxes use a dense cell table; large or sparse ones fall
//! back to a hash map keyed by packed cell coordinates.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use crate::geometry::Vec3;

/// Dense table limit, in cells.
pub(crate) const DENSE_LIMIT: usize = 1 << 25;

#[derive(Default)]
pub(crate) struct CellHasher(u64);

impl Hasher for CellHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.write_u64(*b as u64);
        }
    }

    fn write_u64(&mut self, x: u64) {
        self.0 = (self.0.rotate_left(5) ^ x).wrapping_mul(0x517c_c1b7_2722_0a95);
    }
}

enum Cells {
    Dense { dims: [i64; 3], start: Vec<u32> },
    Sparse(HashMap<u64, (u32, u32), BuildHasherDefault<CellHasher>>),
}

pub struct GridIndex {
    cell: f64,
    inv_cell: f64,
    origin: Vec3,
    points: Vec<Vec3>,
    ids: Vec<u32>,
    cells: Cells,
}

pub(crate) fn pack(c: [i64; 3]) -> u64 {
    // 21 bits per axis.
    let m = (1u64 << 21) - 1;
    ((c[0] as u64) & m) | (((c[1] as u64) & m) << 21) | (((c[2] as u64) & m) << 42)
}

impl GridIndex {
    /// Builds the index; `cell` is the voxel edge length.
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        assert!(points.len() < u32::MAX as usize, "too many points for grid index");
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let origin = lo;
        // Packed keys hold 21 bits per axis; coarser cells keep queries exact.
        let mut cell = cell;
        while (0..3).any(|k| (hi[k] - lo[k]) / cell >= (1u64 << 21) as f64 - 2.0) {
            cell *= 2.0;
        }
        let inv_cell = 1.0 / cell;
        let dims = [0, 1, 2].map(|k| ((hi[k] - lo[k]) * inv_cell).floor() as i64 + 1);
        let coord = |p: &Vec3| [0, 1, 2].map(|k| ((p[k] - origin[k]) * inv_cell).floor() as i64);
        let ncells = dims.iter().map(|d| *d as u128).product::<u128>();

        if ncells <= DENSE_LIMIT.max(4 * points.len()) as u128 && ncells <= (1u128 << 31) {
            let ncells = ncells as usize;
            let linear = |c: [i64; 3]| ((c[2] * dims[1] + c[1]) * dims[0] + c[0]) as usize;
            let keys: Vec<usize> = points.iter().map(|p| linear(coord(p))).collect();
            let mut start = vec![0u32; ncells + 1];
            for k in &keys {
                start[k + 1] += 1;
            }
            for i in 0..ncells {
                start[i + 1] += start[i];
            }
            let mut fill = start.clone();
            let mut ids = vec![0u32; points.len()];
            let mut sorted = vec![Vec3::zeros(); points.len()];
            for (i, k) in keys.iter().enumerate() {
                let slot = fill[*k] as usize;
                fill[*k] += 1;
                ids[slot] = i as u32;
                sorted[slot] = points[i];
            }
            GridIndex {
                cell,
                inv_cell,
                origin,
                points: sorted,
                ids,
                cells: Cells::Dense { dims, start },
            }
        } else {
            let mut order: Vec<(u64, u32)> = points
                .iter()
                .enumerate()
                .map(|(i, p)| (pack(coord(p)), i as u32))
                .collect();
            order.sort_unstable();
            let mut map: HashMap<u64, (u32, u32), BuildHasherDefault<CellHasher>> =
                HashMap::default();
            let mut i = 0;
            while i < order.len() {
                let key = order[i].0;
                let mut j = i;
                while j < order.len() && order[j].0 == key {
                    j += 1;
                }
                map.insert(key, (i as u32, j as u32));
                i = j;
            }
            GridIndex {
                cell,
                inv_cell,
                origin,
                points: order.iter().map(|(_, i)| points[*i as usize]).collect(),
                ids: order.iter().map(|(_, i)| *i).collect(),
                cells: Cells::Sparse(map),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) * self.inv_cell).floor() as i64)
    }

    /// Sorted-storage range of a cell.
    #[inline]
    fn range(&self, c: [i64; 3]) -> (usize, usize) {
        match &self.cells {
            Cells::Dense { dims, start } => {
                if (0..3).any(|k| c[k] < 0 || c[k] >= dims[k]) {
                    return (0, 0);
                }
                let l = ((c[2] * dims[1] + c[1]) * dims[0] + c[0]) as usize;
                (start[l] as usize, start[l + 1] as usize)
            }
            Cells::Sparse(map) => {
                if c.iter().any(|v| *v < 0 || *v >= 1 << 21) {
                    return (0, 0);
                }
                map.get(&pack(c))
                    .map_or((0, 0), |(a, b)| (*a as usize, *b as usize))
            }
        }
    }

    /// Squared distance from `q` to the box of cell `c`.
    #[inline]
    fn cell_dist2(&self, q: &Vec3, c: [i64; 3]) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let lo = self.origin[k] + c[k] as f64 * self.cell;
            let hi = lo + self.cell;
            let d = if q[k] < lo {
                lo - q[k]
            } else if q[k] > hi {
                q[k] - hi
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }

    /// Nearest point within `max_dist` as `(original index, distance)`.
    /// Ties resolve to the smallest original index.
    pub fn nearest(&self, q: &Vec3, max_dist: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let qc = self.cell_of(q);
        let rings = (max_dist * self.inv_cell).ceil() as i64 + 1;
        let mut best_d2 = max_dist * max_dist;
        let mut best: Option<u32> = None;
        for ring in 0..=rings {
            // Every cell of this ring is at least (ring − 1)·cell away.
            let floor = (ring - 1).max(0) as f64 * self.cell;
            if best.is_some() && floor * floor > best_d2 {
                break;
            }
            if floor > max_dist {
                break;
            }
            for dz in -ring..=ring {
                for dy in -ring..=ring {
                    let edge = dz.abs() == ring || dy.abs() == ring;
                    let step = if edge { 1 } else { 2 * ring.max(1) };
                    let mut dx = -ring;
                    while dx <= ring {
                        let c = [qc[0] + dx, qc[1] + dy, qc[2] + dz];
                        dx += step;
                        if self.cell_dist2(q, c) > best_d2 {
                            continue;
                        }
                        let (a, b) = self.range(c);
                        for s in a..b {
                            let d2 = (self.points[s] - q).norm_squared();
                            let id = self.ids[s];
                            if d2 < best_d2 || (d2 == best_d2 && best.is_none_or(|b| id < b)) {
                                best_d2 = d2;
                                best = Some(id);
                            }
                        }
                    }
                }
            }
        }
        best.map(|id| (id as usize, best_d2.sqrt()))
    }

    /// Calls `f(original index, point)` for every point within `radius` of `center`.
    pub fn for_each_within<F: FnMut(usize, &Vec3)>(&self, center: &Vec3, radius: f64, mut f: F) {
        let r2 = radius * radius;
        let lo = self.cell_of(&(center - Vec3::repeat(radius)));
        let hi = self.cell_of(&(center + Vec3::repeat(radius)));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let c = [x, y, z];
                    if self.cell_dist2(center, c) > r2 {
                        continue;
                    }
                    let (a, b) = self.range(c);
                    for s in a..b {
                        if (self.points[s] - center).norm_squared() <= r2 {
                            f(self.ids[s] as usize, &self.points[s]);
                        }
                    }
                }
            }
        }
    }

    pub fn within(&self, center: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(center, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_nearest(points: &[Vec3], q: &Vec3, max_dist: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm();
            if d <= max_dist && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best
    }

    fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec(
            (-2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z)),
            1..300,
        )
    }

    #[test]
    fn empty_index_has_no_neighbors() {
        let g = GridIndex::new(&[], 0.3);
        assert!(g.nearest(&Vec3::zeros(), 1.0).is_none());
        assert!(g.within(&Vec3::zeros(), 1.0).is_empty());
    }

    #[test]
    fn far_query_outside_grid() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let g = GridIndex::new(&pts, 0.3);
        assert!(g.nearest(&Vec3::new(10.0, 0.0, 0.0), 0.7).is_none());
        let (i, d) = g.nearest(&Vec3::new(1.5, 0.0, 0.0), 0.7).unwrap();
        assert_eq!(i, 1);
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sparse_layout_matches_dense() {
        // Two clusters far apart force the hash-map layout.
        let mut pts: Vec<Vec3> = (0..50).map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        pts.extend((0..50).map(|i| Vec3::new(5000.0 + i as f64 * 0.01, 5000.0, 5000.0)));
        let g = GridIndex::new(&pts, 0.01);
        assert!(matches!(g.cells, Cells::Sparse(_)));
        for q in [Vec3::new(0.105, 0.0, 0.0), Vec3::new(5000.2, 5000.0, 5000.0)] {
            assert_eq!(g.nearest(&q, 0.5).map(|x| x.0), brute_nearest(&pts, &q, 0.5).map(|x| x.0));
        }
    }

    proptest! {
        #[test]
        fn nearest_matches_brute_force(pts in cloud(), qx in -3.0..3.0f64, qy in -3.0..3.0f64, qz in -2.0..2.0f64, cell in 0.05..1.0f64, max_dist in 0.01..2.0f64) {
            let g = GridIndex::new(&pts, cell);
            let q = Vec3::new(qx, qy, qz);
            let got = g.nearest(&q, max_dist);
            let want = brute_nearest(&pts, &q, max_dist);
            match (got, want) {
                (None, None) => {}
                (Some((_, a)), Some((_, b))) => prop_assert!((a - b).abs() < 1e-12),
                other => prop_assert!(false, "mismatch {:?}", other),
            }
        }

        #[test]
        fn radius_matches_brute_force(pts in cloud(), qx in -3.0..3.0f64, qy in -3.0..3.0f64, qz in -2.0..2.0f64, cell in 0.05..1.0f64, r in 0.01..2.0f64) {
            let g = GridIndex::new(&pts, cell);
            let q = Vec3::new(qx, qy, qz);
            let want: Vec<usize> = (0..pts.len()).filter(|i| (pts[*i] - q).norm_squared() <= r * r).collect();
            prop_assert_eq!(g.within(&q, r), want);
        }
    }
}
