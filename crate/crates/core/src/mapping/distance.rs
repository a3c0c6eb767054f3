use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use super::index::{pack, CellHasher, DENSE_LIMIT};
use super::{GridIndex, PointCloud};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Mat3, Vec3};

/// Below this eigenvalue ratio a neighborhood is treated as a line.
const COLLINEAR_RATIO: f64 = 1e-10;

/// Largest number of sub-cells per coarse cell edge in [`PlaneIndex`].
const MAX_SUBDIV: usize = 4;

/// Target mean population of a non-empty sub-cell.
const SUB_POPULATION: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub point: Vec3,
    /// Unit normal.
    pub normal: Vec3,
}

impl Plane {
    pub fn distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal).abs()
    }
}

/// Running sums of offsets from a fixed origin; `o` holds the upper
/// triangle of the outer-product sum as xx, xy, xz, yy, yz, zz.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    s: [f64; 3],
    o: [f64; 6],
}

impl Moments {
    #[inline]
    fn add(&mut self, d: [f64; 3]) {
        self.n += 1.0;
        self.s[0] += d[0];
        self.s[1] += d[1];
        self.s[2] += d[2];
        self.o[0] += d[0] * d[0];
        self.o[1] += d[0] * d[1];
        self.o[2] += d[0] * d[2];
        self.o[3] += d[1] * d[1];
        self.o[4] += d[1] * d[2];
        self.o[5] += d[2] * d[2];
    }

    /// Adds moments taken about a point `d` away from this origin.
    #[inline]
    fn add_shifted(&mut self, m: &Moments, d: [f64; 3]) {
        let (n, s) = (m.n, m.s);
        self.n += n;
        for k in 0..3 {
            self.s[k] += s[k] + n * d[k];
        }
        let pair = |i: usize, j: usize| s[i] * d[j] + d[i] * s[j] + n * d[i] * d[j];
        self.o[0] += m.o[0] + pair(0, 0);
        self.o[1] += m.o[1] + pair(0, 1);
        self.o[2] += m.o[2] + pair(0, 2);
        self.o[3] += m.o[3] + pair(1, 1);
        self.o[4] += m.o[4] + pair(1, 2);
        self.o[5] += m.o[5] + pair(2, 2);
    }

    fn plane(&self, origin: &Vec3) -> Option<Plane> {
        if self.n < 3.0 {
            return None;
        }
        let n = self.n;
        let mean = Vec3::new(self.s[0], self.s[1], self.s[2]) / n;
        let o = self.o;
        let outer = Mat3::new(o[0], o[1], o[2], o[1], o[3], o[4], o[2], o[4], o[5]);
        let cov = outer / n - mean * mean.transpose();
        let eig = SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        let largest = eig.eigenvalues[order[2]];
        if !(largest > 0.0) || eig.eigenvalues[order[1]] <= COLLINEAR_RATIO * largest {
            return None;
        }
        let normal = eig.eigenvectors.column(order[0]).normalize();
        Some(Plane {
            point: origin + mean,
            normal,
        })
    }
}

#[inline]
fn diff(a: &Vec3, b: &Vec3) -> [f64; 3] {
    [a.x - b.x, a.y - b.y, a.z - b.z]
}

/// Least-squares plane through `points`; `None` for fewer than three or
/// collinear points.
pub fn fit_plane(points: &[Vec3]) -> Option<Plane> {
    let origin = *points.first()?;
    let mut m = Moments::default();
    for p in points {
        m.add(diff(p, &origin));
    }
    m.plane(&origin)
}

struct SubCell {
    lo: Vec3,
    hi: Vec3,
    start: u32,
    end: u32,
    /// Moments about `lo`.
    moments: Moments,
}

struct CoarseCell {
    lo: Vec3,
    hi: Vec3,
    subs: (u32, u32),
}

/// Coarse cell coordinates to cell number.
enum CoarseLookup {
    Dense { dims: [i64; 3], table: Vec<u32> },
    Sparse(HashMap<u64, u32, BuildHasherDefault<CellHasher>>),
}

impl CoarseLookup {
    #[inline]
    fn get(&self, c: [i64; 3]) -> Option<u32> {
        match self {
            CoarseLookup::Dense { dims, table } => {
                if (0..3).any(|k| c[k] < 0 || c[k] >= dims[k]) {
                    return None;
                }
                let v = table[((c[2] * dims[1] + c[1]) * dims[0] + c[0]) as usize];
                (v != u32::MAX).then_some(v)
            }
            CoarseLookup::Sparse(map) => {
                if c.iter().any(|v| *v < 0) {
                    return None;
                }
                map.get(&pack(c)).copied()
            }
        }
    }
}

/// Exact radius-neighborhood moments. Points are grouped into coarse cells
/// of the query radius, each split into sub-cells that carry their own
/// moments and tight bounds; a sub-cell wholly inside the query ball is
/// added in one step and only those crossing its surface are scanned.
pub(crate) struct PlaneIndex {
    radius: f64,
    origin: Vec3,
    inv_cell: f64,
    points: Vec<Vec3>,
    subs: Vec<SubCell>,
    coarse: Vec<CoarseCell>,
    lookup: CoarseLookup,
}

fn dist2_to_box(q: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let d = (lo[k] - q[k]).max(q[k] - hi[k]).max(0.0);
        d2 += d * d;
    }
    d2
}

fn far2_to_box(q: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let d = (q[k] - lo[k]).abs().max((hi[k] - q[k]).abs());
        d2 += d * d;
    }
    d2
}

impl PlaneIndex {
    pub(crate) fn new(points: &[Vec3], radius: f64) -> Self {
        assert!(radius > 0.0 && radius.is_finite(), "radius must be positive");
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        // Packed keys hold 21 bits per axis; coarser cells keep queries exact.
        let mut cell = radius;
        while (hi - lo).amax() / cell >= (1u64 << 21) as f64 - 2.0 {
            cell *= 2.0;
        }
        let inv_cell = 1.0 / cell;
        let mut keys: Vec<(u64, usize, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (pack([0, 1, 2].map(|k| ((p[k] - lo[k]) * inv_cell).floor() as i64)), 0, i as u32))
            .collect();
        keys.sort_unstable();
        let occupied = 1 + keys.windows(2).filter(|w| w[0].0 != w[1].0).count();
        // Surface clouds fill a coarse cell's sub-cells roughly quadratically.
        let per_cell = points.len() as f64 / occupied as f64;
        let subdiv = ((per_cell / SUB_POPULATION).sqrt().floor() as usize).clamp(1, MAX_SUBDIV);
        if subdiv > 1 {
            let sub_inv = subdiv as f64 * inv_cell;
            for key in &mut keys {
                let p = points[key.2 as usize];
                let sub = [0, 1, 2].map(|k| {
                    let c = ((p[k] - lo[k]) * inv_cell).floor();
                    let f = ((p[k] - lo[k] - c * cell) * sub_inv).floor();
                    (f.max(0.0) as usize).min(subdiv - 1)
                });
                key.1 = sub[0] + subdiv * (sub[1] + subdiv * sub[2]);
            }
            keys.sort_unstable();
        }

        let sorted: Vec<Vec3> = keys.iter().map(|k| points[k.2 as usize]).collect();
        let mut subs = Vec::new();
        let mut coarse = Vec::new();
        let mut cell_keys = Vec::new();
        let mut i = 0;
        while i < keys.len() {
            let first_sub = subs.len() as u32;
            let (mut clo, mut chi) = (sorted[i], sorted[i]);
            let key = keys[i].0;
            while i < keys.len() && keys[i].0 == key {
                let sub = keys[i].1;
                let start = i;
                let (mut slo, mut shi) = (sorted[i], sorted[i]);
                while i < keys.len() && keys[i].0 == key && keys[i].1 == sub {
                    slo = slo.inf(&sorted[i]);
                    shi = shi.sup(&sorted[i]);
                    i += 1;
                }
                let mut moments = Moments::default();
                for p in &sorted[start..i] {
                    moments.add(diff(p, &slo));
                }
                clo = clo.inf(&slo);
                chi = chi.sup(&shi);
                subs.push(SubCell {
                    lo: slo,
                    hi: shi,
                    start: start as u32,
                    end: i as u32,
                    moments,
                });
            }
            cell_keys.push(key);
            coarse.push(CoarseCell {
                lo: clo,
                hi: chi,
                subs: (first_sub, subs.len() as u32),
            });
        }
        let dims = [0, 1, 2].map(|k| ((hi[k] - lo[k]) * inv_cell).floor() as i64 + 1);
        let ncells = dims.iter().map(|d| *d as u128).product::<u128>();
        let lookup = if ncells <= DENSE_LIMIT.max(4 * points.len()) as u128 && ncells <= (1u128 << 31) {
            let mut table = vec![u32::MAX; ncells as usize];
            let m = (1u64 << 21) - 1;
            for (i, key) in cell_keys.iter().enumerate() {
                let c = [key & m, (key >> 21) & m, key >> 42].map(|v| v as i64);
                table[((c[2] * dims[1] + c[1]) * dims[0] + c[0]) as usize] = i as u32;
            }
            CoarseLookup::Dense { dims, table }
        } else {
            CoarseLookup::Sparse(cell_keys.iter().enumerate().map(|(i, k)| (*k, i as u32)).collect())
        };
        PlaneIndex {
            radius,
            origin: lo,
            inv_cell,
            points: sorted,
            subs,
            coarse,
            lookup,
        }
    }

    /// Moments of all points within `radius` of `center`, about `center`.
    fn moments(&self, center: &Vec3, radius: f64) -> Moments {
        let r2 = radius * radius;
        let cell = |v: f64, k: usize| ((v - self.origin[k]) * self.inv_cell).floor() as i64;
        let lo = [0, 1, 2].map(|k| cell(center[k] - radius, k));
        let hi = [0, 1, 2].map(|k| cell(center[k] + radius, k));
        let mut m = Moments::default();
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let Some(ci) = self.lookup.get([x, y, z]) else {
                        continue;
                    };
                    let c = &self.coarse[ci as usize];
                    if dist2_to_box(center, &c.lo, &c.hi) > r2 {
                        continue;
                    }
                    for s in &self.subs[c.subs.0 as usize..c.subs.1 as usize] {
                        if dist2_to_box(center, &s.lo, &s.hi) > r2 {
                            continue;
                        }
                        if far2_to_box(center, &s.lo, &s.hi) <= r2 {
                            m.add_shifted(&s.moments, diff(&s.lo, center));
                            continue;
                        }
                        for p in &self.points[s.start as usize..s.end as usize] {
                            let d = diff(p, center);
                            if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r2 {
                                m.add(d);
                            }
                        }
                    }
                }
            }
        }
        m
    }

    /// Least-squares plane of the points within the index radius of `center`.
    pub(crate) fn plane_at(&self, center: &Vec3) -> Option<Plane> {
        self.moments(center, self.radius).plane(center)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct C2cResult {
    /// Per compared point; `None` when excluded by the distance threshold.
    pub distances: Vec<Option<f64>>,
    pub mean: f64,
    pub included_count: usize,
    pub excluded_count: usize,
    pub radius: f64,
    pub max_dist: f64,
}

/// Distance from each compared point to the local least-squares plane of
/// the reference, fitted over the reference neighbors within `radius` of
/// the nearest reference point. The plane distance is capped by the
/// nearest-neighbor distance; sparse or collinear neighborhoods use the
/// nearest-neighbor distance alone. Points farther than `max_dist` from
/// the reference are excluded. Not symmetric in its arguments.
pub fn cloud_to_cloud_distance(
    compared: &PointCloud,
    reference: &PointCloud,
    radius: f64,
    max_dist: f64,
) -> Result<C2cResult> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("radius must be positive, got {radius}")));
    }
    if !(max_dist > 0.0 && max_dist.is_finite()) {
        return Err(invalid(format!("max distance must be positive, got {max_dist}")));
    }
    if reference.is_empty() {
        return Err(invalid("reference cloud is empty"));
    }
    if compared.is_empty() {
        return Err(invalid("compared cloud is empty"));
    }
    compared.validate()?;
    reference.validate()?;
    let refs = reference.positions();
    let index = GridIndex::new(refs, nn_cell(radius, max_dist));
    let planes = PlaneIndex::new(refs, radius);
    let queries = compared.positions();
    let order = spatial_order(queries, radius);
    let nearest: Vec<Option<(usize, f64)>> = order
        .par_iter()
        .map(|i| index.nearest(&queries[*i as usize], max_dist))
        .collect();
    // One plane per distinct nearest reference point, in first-use order.
    let mut slot = vec![u32::MAX; refs.len()];
    let mut centers = Vec::new();
    for (nn, _) in nearest.iter().flatten() {
        if slot[*nn] == u32::MAX {
            slot[*nn] = centers.len() as u32;
            centers.push(*nn);
        }
    }
    let fitted: Vec<Option<Plane>> = centers.par_iter().map(|c| planes.plane_at(&refs[*c])).collect();
    let mut distances = vec![None; queries.len()];
    for (i, found) in order.iter().zip(nearest) {
        let q = &queries[*i as usize];
        distances[*i as usize] = found.map(|(nn, nn_dist)| match &fitted[slot[nn] as usize] {
            Some(plane) => plane.distance(q).min(nn_dist),
            None => nn_dist,
        });
    }
    let (mut sum, mut included) = (0.0, 0usize);
    for d in distances.iter().flatten() {
        sum += d;
        included += 1;
    }
    if included == 0 {
        return Err(Error::NoOverlap(format!(
            "all {} compared points are farther than {max_dist} m from the reference",
            compared.len()
        )));
    }
    Ok(C2cResult {
        mean: sum / included as f64,
        included_count: included,
        excluded_count: distances.len() - included,
        distances,
        radius,
        max_dist,
    })
}

/// Query indices sorted by cell so neighboring queries share cache lines.
fn spatial_order(points: &[Vec3], cell: f64) -> Vec<u32> {
    let lo = points.iter().fold(Vec3::repeat(f64::INFINITY), |a, p| a.inf(p));
    let mut keys: Vec<([i64; 3], u32)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ([2, 1, 0].map(|k| ((p[k] - lo[k]) / cell).floor() as i64), i as u32))
        .collect();
    keys.sort_unstable();
    keys.into_iter().map(|(_, i)| i).collect()
}

/// Nearest-neighbor grid cell for a plane radius and search limit.
pub(crate) fn nn_cell(radius: f64, max_dist: f64) -> f64 {
    (radius / MAX_SUBDIV as f64).max(max_dist / 16.0)
}
