//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{Matrix3, UnitQuaternion, Vector3, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optimal line `host = a·sensor + b` below every pair, minimizing the
/// summed vertical gap, found by bisection on the subgradient of the
/// objective as a function of the slope. Coordinates are relative to the
/// first pair. Returns `(a, b_relative, objective)`.
pub fn lp_clock_oracle(pairs: &[(f64, f64)]) -> (f64, f64, f64) {
    let (s0, h0) = pairs[0];
    let pts: Vec<(f64, f64)> = pairs.iter().map(|(s, h)| (s - s0, h - h0)).collect();
    let n = pts.len() as f64;
    let sum_s: f64 = pts.iter().map(|p| p.0).sum();
    let argmin = |a: f64| {
        pts.iter()
            .map(|(s, h)| (h - a * s, *s))
            .fold((f64::INFINITY, 0.0), |best, c| if c.0 < best.0 { c } else { best })
    };
    let (mut lo, mut hi) = (0.5, 1.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (_, s_j) = argmin(mid);
        if n * s_j - sum_s > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The optimum is a vertex slope; pick the better side.
    let eval = |a: f64| {
        let (b, _) = argmin(a);
        (a, b, lp_objective(&pts, a, b))
    };
    let (x, y) = (eval(lo), eval(hi));
    if x.2 <= y.2 {
        x
    } else {
        y
    }
}

/// Summed gap `Σ (h − a·s − b)` in relative coordinates.
pub fn lp_objective(rel: &[(f64, f64)], a: f64, b: f64) -> f64 {
    rel.iter().map(|(s, h)| h - a * s - b).sum()
}

/// Exhaustive search over all lines through two points.
pub fn lp_brute_force(pairs: &[(f64, f64)]) -> f64 {
    let (s0, h0) = pairs[0];
    let pts: Vec<(f64, f64)> = pairs.iter().map(|(s, h)| (s - s0, h - h0)).collect();
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (si, hi) = pts[i];
            let (sj, hj) = pts[j];
            let a = (hj - hi) / (sj - si);
            let b = hi - a * si;
            if pts.iter().all(|(s, h)| h - a * s - b >= -1e-12) {
                best = best.min(lp_objective(&pts, a, b));
            }
        }
    }
    best
}

/// Cubic Hermite through `(ts, vs)` with central-difference tangents.
fn hermite(ts: &[f64], vs: &[Vector3<f64>], t: f64) -> Option<Vector3<f64>> {
    let n = ts.len();
    if t < ts[0] || t > ts[n - 1] {
        return None;
    }
    let k = ts.partition_point(|x| *x <= t).clamp(1, n - 1);
    let tangent = |i: usize| {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        (vs[b] - vs[a]) / (ts[b] - ts[a])
    };
    let h = ts[k] - ts[k - 1];
    let s = (t - ts[k - 1]) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    Some(vs[k - 1] * h00 + tangent(k - 1) * (h * h10) + vs[k] * h01 + tangent(k) * (h * h11))
}

/// Offset `t_d` (imu = lidar + t_d) maximizing Pearson correlation of
/// rate norms, searched exhaustively on a 1 ms grid in `±window`.
/// Lidar rates are body-frame rotation vectors between consecutive poses
/// over the interval, placed at its midpoint. Both signals are rebuilt as
/// vector Hermite curves before taking norms.
pub fn correlation_oracle_1khz(
    imu: &[(f64, Vector3<f64>)],
    lidar: &[(f64, UnitQuaternion<f64>)],
    window: f64,
) -> f64 {
    let gt: Vec<f64> = imu.iter().map(|s| s.0).collect();
    let gv: Vec<Vector3<f64>> = imu.iter().map(|s| s.1).collect();
    let (mut lt, mut lv) = (Vec::new(), Vec::new());
    for w in lidar.windows(2) {
        let dt = w[1].0 - w[0].0;
        lt.push(0.5 * (w[0].0 + w[1].0));
        lv.push((w[0].1.inverse() * w[1].1).scaled_axis() / dt);
    }
    let step = 1e-3;
    let grid: Vec<f64> = {
        let (a, b) = (lt[0], lt[lt.len() - 1]);
        let n = ((b - a) / step).floor() as usize;
        (0..=n).map(|k| a + k as f64 * step).collect()
    };
    let lidar_grid: Vec<f64> = grid.iter().map(|t| hermite(&lt, &lv, *t).unwrap().norm()).collect();
    let shifts = (window / step).round() as i64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in -shifts..=shifts {
        let d = k as f64 * step;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (t, l) in grid.iter().zip(&lidar_grid) {
            if let Some(g) = hermite(&gt, &gv, t + d) {
                xs.push(g.norm());
                ys.push(*l);
            }
        }
        let c = pearson(&xs, &ys);
        if c > best.0 {
            best = (c, d);
        }
    }
    best.1
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Rotation aligning two vector pairs exactly in direction (triad method).
fn triad(a1: &Vector3<f64>, a2: &Vector3<f64>, b1: &Vector3<f64>, b2: &Vector3<f64>) -> Option<Matrix3<f64>> {
    let frame = |u: &Vector3<f64>, v: &Vector3<f64>| {
        let e1 = u.try_normalize(1e-12)?;
        let e2 = u.cross(v).try_normalize(1e-12)?;
        Some(Matrix3::from_columns(&[e1, e2, e1.cross(&e2)]))
    };
    Some(frame(b1, b2)? * frame(a1, a2)?.transpose())
}

fn kabsch(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for (target, source) in pairs {
        h += target * source.transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (u * vt).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * vt
}

/// RANSAC over minimal two-pair samples, refined on the consensus set.
/// Pairs are `(target, source)` with `target ≈ R·source`.
pub fn ransac_rotation(
    pairs: &[(Vector3<f64>, Vector3<f64>)],
    threshold: f64,
    iterations: usize,
    seed: u64,
) -> (Matrix3<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: (usize, Matrix3<f64>) = (0, Matrix3::identity());
    for _ in 0..iterations {
        let i = rng.random_range(0..pairs.len());
        let j = rng.random_range(0..pairs.len());
        let Some(r) = triad(&pairs[i].1, &pairs[j].1, &pairs[i].0, &pairs[j].0) else {
            continue;
        };
        let count = pairs.iter().filter(|(t, s)| (t - r * s).norm() < threshold).count();
        if count > best.0 {
            best = (count, r);
        }
    }
    let inliers: Vec<bool> = pairs.iter().map(|(t, s)| (t - best.1 * s).norm() < threshold).collect();
    let chosen: Vec<_> = pairs.iter().zip(&inliers).filter(|(_, k)| **k).map(|(p, _)| *p).collect();
    (kabsch(&chosen), inliers)
}

/// RMS distance of points to their total-least-squares plane.
pub fn plane_thickness(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector3<f64>>() / n;
    let mut m = nalgebra::DMatrix::zeros(points.len(), 3);
    for (i, p) in points.iter().enumerate() {
        let d = p - c;
        m[(i, 0)] = d.x;
        m[(i, 1)] = d.y;
        m[(i, 2)] = d.z;
    }
    let sv = SVD::new(m, false, false).singular_values;
    sv.iter().cloned().fold(f64::INFINITY, f64::min) / n.sqrt()
}
