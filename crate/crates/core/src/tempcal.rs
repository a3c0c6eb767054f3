//! Lidar-IMU temporal and rotational calibration.
//!
//! The time offset comes first: angular-rate norms are invariant to the
//! unknown lidar-to-IMU rotation, so the norms of gyro rates and of rates
//! differentiated from lidar odometry can be cross-correlated directly.
//! With the streams aligned, the rotation is the orthogonal Procrustes
//! solution over paired rate vectors, iterated with residual truncation.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{so3_log, Mat3, Rotation, Timestamp, Vec3};
use crate::trajectory::Trajectory;

pub const DEFAULT_PERIOD: f64 = 0.01;
pub const DEFAULT_WINDOW: f64 = 0.5;
/// Minimum correlation peak accepted as a valid offset.
pub const MIN_PEAK_CORRELATION: f64 = 0.5;
/// Minimum overlap of the two rate series at every searched shift, seconds.
pub const MIN_OVERLAP: f64 = 10.0;
/// Minimum shared IMU/lidar time span for the full pipeline, seconds.
pub const MIN_CALIBRATION_SPAN: f64 = 30.0;
/// Floor of the truncation threshold, rad/s.
pub const TRUNCATION_FLOOR: f64 = 0.02;
pub const MAX_TLS_ITERATIONS: usize = 10;
/// Second-to-first singular value ratio below which the rates are rank 1.
const RANK_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: Timestamp,
    /// rad/s
    pub gyro: Vec3,
    /// m/s²
    pub accel: Vec3,
}

/// Angular-rate norms on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSeries {
    period: f64,
    start: Timestamp,
    values: Vec<f64>,
}

impl RateSeries {
    pub fn new(start: Timestamp, period: f64, values: Vec<f64>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(invalid(format!("rate series period must be > 0, got {period}")));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("rate norm {v} is not a finite nonnegative value")));
        }
        Ok(RateSeries {
            period,
            start,
            values,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time_at(&self, i: usize) -> Timestamp {
        self.start + i as f64 * self.period
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeOffsetEstimate {
    /// Seconds added to lidar timestamps to put them on the IMU timeline.
    pub t_d: f64,
    pub peak_correlation: f64,
    pub search_window: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationEstimate {
    /// Lidar-to-IMU rotation: `ω_imu ≈ R·ω_lidar`.
    pub rotation: Rotation,
    pub inlier_count: usize,
    /// RMS of inlier residual norms, rad/s.
    pub rms_residual: f64,
    /// Number of solves after which the inlier set changed.
    pub truncation_rounds: usize,
    pub inliers: Vec<bool>,
}

/// Body-frame angular rates from consecutive poses, stamped at interval
/// midpoints and expressed in the frame of the earlier pose.
pub fn angular_rates_from_trajectory(traj: &Trajectory) -> Result<Vec<(Timestamp, Vec3)>> {
    if traj.len() < 2 {
        return Err(Error::InsufficientData {
            what: "angular rates from trajectory",
            needed: 2,
            got: traj.len(),
        });
    }
    Ok(traj
        .poses()
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let delta = w[0].rotation.inverse().compose(&w[1].rotation);
            (w[0].t + 0.5 * dt, so3_log(&delta) / dt)
        })
        .collect())
}

/// Uniform grid from the first sample spanning the input, after validation.
fn resample_grid(samples: &[(Timestamp, Vec3)], period: f64) -> Result<(Timestamp, usize)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            what: "rate series",
            needed: 2,
            got: samples.len(),
        });
    }
    if !(period > 0.0) {
        return Err(invalid(format!("resampling period must be > 0, got {period}")));
    }
    if let Some(i) = samples.windows(2).position(|w| w[1].0 <= w[0].0) {
        return Err(Error::Ordering {
            what: "rate sample times",
            index: i + 1,
        });
    }
    let t0 = samples[0].0;
    let span = samples[samples.len() - 1].0 - t0;
    if period >= span {
        return Err(Error::InsufficientData {
            what: "rate series (period exceeds input span)",
            needed: 2,
            got: 1,
        });
    }
    Ok((t0, (span / period * (1.0 + 1e-12)).floor() as usize + 1))
}

/// Walks the grid, calling `f(j, u)` with the bracketing interval `j` and
/// the fraction `u` within it.
fn resample(
    samples: &[(Timestamp, Vec3)],
    period: f64,
    mut f: impl FnMut(usize, f64) -> f64,
) -> Result<RateSeries> {
    let (t0, n) = resample_grid(samples, period)?;
    let last = samples.len() - 1;
    let mut values = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let t = t0 + i as f64 * period;
        while j + 1 < last && samples[j + 1].0 <= t {
            j += 1;
        }
        let u = ((t - samples[j].0) / (samples[j + 1].0 - samples[j].0)).clamp(0.0, 1.0);
        values.push(f(j, u));
    }
    RateSeries::new(t0, period, values)
}

/// Resamples `|ω|` onto a uniform grid starting at the first sample by
/// linear interpolation of the norms.
pub fn rate_norm_series(samples: &[(Timestamp, Vec3)], period: f64) -> Result<RateSeries> {
    let norms: Vec<f64> = samples.iter().map(|(_, w)| w.norm()).collect();
    resample(samples, period, |j, u| norms[j] + (norms[j + 1] - norms[j]) * u)
}

/// Like [`rate_norm_series`], but interpolates the rate vectors with a cubic
/// Hermite curve (central-difference tangents) before taking the norm.
/// Follows sparse odometry rates far more closely than linear norms.
pub fn rate_norm_series_hermite(samples: &[(Timestamp, Vec3)], period: f64) -> Result<RateSeries> {
    let tangent = |i: usize| {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(samples.len() - 1));
        (samples[b].1 - samples[a].1) / (samples[b].0 - samples[a].0)
    };
    resample(samples, period, |j, u| {
        let h = samples[j + 1].0 - samples[j].0;
        let (u2, u3) = (u * u, u * u * u);
        let w = samples[j].1 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + tangent(j) * (h * (u3 - 2.0 * u2 + u))
            + samples[j + 1].1 * (3.0 * u2 - 2.0 * u3)
            + tangent(j + 1) * (h * (u3 - u2));
        w.norm()
    })
}

/// Pearson correlation of two equal-length slices; `None` when either is flat.
fn zncc(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale = saa.max(sbb).max(1e-300);
    if saa <= 1e-24 * scale.max(1.0) || sbb <= 1e-24 * scale.max(1.0) {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Offset maximizing zero-normalized cross-correlation over `±window`,
/// refined to sub-sample precision with a parabola through the peak.
pub fn estimate_time_offset(
    imu: &RateSeries,
    lidar: &RateSeries,
    window: f64,
) -> Result<TimeOffsetEstimate> {
    if ((imu.period - lidar.period) / imu.period).abs() > 1e-9 {
        return Err(invalid(format!(
            "rate series periods differ: {} vs {}",
            imu.period, lidar.period
        )));
    }
    if !(window >= 0.0) {
        return Err(invalid(format!("search window must be >= 0, got {window}")));
    }
    let p = imu.period;
    let delta = imu.start - lidar.start;
    // Pairing imu[i] with lidar[i + k] implies t_d = delta − k·p.
    let k_min = ((delta - window) / p - 1e-9).ceil() as i64;
    let k_max = ((delta + window) / p + 1e-9).floor() as i64;
    if k_min > k_max {
        return Err(invalid("search window smaller than one sample"));
    }
    let (ni, nl) = (imu.len() as i64, lidar.len() as i64);
    let range = |k: i64| -> (usize, usize) {
        let lo = 0.max(-k);
        let hi = ni.min(nl - k);
        (lo.max(0) as usize, hi.max(lo).max(0) as usize)
    };
    let min_overlap = (k_min..=k_max)
        .map(|k| {
            let (lo, hi) = range(k);
            hi - lo
        })
        .min()
        .unwrap_or(0);
    if (min_overlap as f64) * p < MIN_OVERLAP {
        return Err(Error::NoOverlap(format!(
            "rate series overlap {:.3} s is below {MIN_OVERLAP} s within the ±{window} s window",
            min_overlap as f64 * p
        )));
    }

    let shifts: Vec<i64> = (k_min..=k_max).collect();
    let scores: Vec<Option<f64>> = shifts
        .par_iter()
        .map(|&k| {
            let (lo, hi) = range(k);
            let jl = (lo as i64 + k) as usize;
            zncc(&imu.values[lo..hi], &lidar.values[jl..jl + (hi - lo)])
        })
        .collect();
    let scores: Vec<f64> = scores
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::DegenerateMotion("angular-rate norm series has no variation".into()))?;

    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let peak = scores[best];
    let mut k_star = shifts[best] as f64;
    if best > 0 && best + 1 < scores.len() {
        let (cm, c0, cp) = (scores[best - 1], peak, scores[best + 1]);
        let denom = cm - 2.0 * c0 + cp;
        if denom < 0.0 {
            k_star += (0.5 * (cm - cp) / denom).clamp(-0.5, 0.5);
        }
    }
    if peak < MIN_PEAK_CORRELATION {
        return Err(Error::LowConfidence {
            peak,
            threshold: MIN_PEAK_CORRELATION,
        });
    }
    let t_d = (delta - k_star * p).clamp(-window, window);
    Ok(TimeOffsetEstimate {
        t_d,
        peak_correlation: peak.min(1.0),
        search_window: window,
    })
}

/// Procrustes rotation `R` minimizing `Σ |b − R a|²` over the given pairs.
fn procrustes(pairs: &[(Vec3, Vec3)], mask: &[bool]) -> Rotation {
    let mut h = Mat3::zeros();
    for ((imu, lidar), _) in pairs.iter().zip(mask).filter(|(_, m)| **m) {
        h += lidar * imu.transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, if d == 0.0 { 1.0 } else { d }));
    Rotation::from_matrix(&(v * fix * u.transpose()))
}

fn rank_below_two(pairs: &[(Vec3, Vec3)], mask: &[bool]) -> bool {
    let mut m = Mat3::zeros();
    for ((_, lidar), _) in pairs.iter().zip(mask).filter(|(_, m)| **m) {
        m += lidar * lidar.transpose();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] <= 0.0 || ev[1].max(0.0).sqrt() < RANK_RATIO * ev[0].sqrt()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Robust lidar-to-IMU rotation from time-aligned `(ω_imu, ω_lidar)` pairs.
pub fn estimate_rotation_tls(pairs: &[(Vec3, Vec3)]) -> Result<RotationEstimate> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData {
            what: "rotation estimate",
            needed: 3,
            got: pairs.len(),
        });
    }
    let mut inliers = vec![true; pairs.len()];
    let mut rounds = 0;
    let mut rotation;
    let mut iteration = 0;
    loop {
        let count = inliers.iter().filter(|m| **m).count();
        if count < 3 {
            return Err(Error::InsufficientData {
                what: "rotation inliers",
                needed: 3,
                got: count,
            });
        }
        if rank_below_two(pairs, &inliers) {
            return Err(Error::DegenerateMotion(
                "lidar angular rates span fewer than two axes".into(),
            ));
        }
        rotation = procrustes(pairs, &inliers);
        iteration += 1;
        let residuals: Vec<f64> = pairs
            .iter()
            .map(|(imu, lidar)| (imu - rotation.rotate(lidar)).norm())
            .collect();
        let mut sorted = residuals.clone();
        let med = median(&mut sorted);
        let mut dev: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
        let mad = median(&mut dev);
        let threshold = (med + 3.0 * mad).max(TRUNCATION_FLOOR);
        let next: Vec<bool> = residuals.iter().map(|r| *r <= threshold).collect();
        if next == inliers || iteration >= MAX_TLS_ITERATIONS {
            if next != inliers {
                // Iteration cap: settle on the last truncated set.
                inliers = next;
                rounds += 1;
                rotation = procrustes(pairs, &inliers);
            }
            break;
        }
        inliers = next;
        rounds += 1;
    }
    let (sum_sq, count) = pairs
        .iter()
        .zip(&inliers)
        .filter(|(_, m)| **m)
        .fold((0.0, 0usize), |(s, c), ((imu, lidar), _)| {
            (s + (imu - rotation.rotate(lidar)).norm_squared(), c + 1)
        });
    if count < 3 {
        return Err(Error::InsufficientData {
            what: "rotation inliers",
            needed: 3,
            got: count,
        });
    }
    Ok(RotationEstimate {
        rotation,
        inlier_count: count,
        rms_residual: (sum_sq / count as f64).sqrt(),
        truncation_rounds: rounds,
        inliers,
    })
}

/// Gyro rate at `t` by componentwise linear interpolation.
pub fn interpolate_gyro(imu: &[ImuSample], t: Timestamp) -> Option<Vec3> {
    if imu.is_empty() || t < imu[0].t || t > imu[imu.len() - 1].t {
        return None;
    }
    let hi = imu.partition_point(|s| s.t < t);
    if imu[hi].t == t {
        return Some(imu[hi].gyro);
    }
    let (a, b) = (&imu[hi - 1], &imu[hi]);
    let u = (t - a.t) / (b.t - a.t);
    Some(a.gyro + (b.gyro - a.gyro) * u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    pub window: f64,
    pub period: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            window: DEFAULT_WINDOW,
            period: DEFAULT_PERIOD,
        }
    }
}

/// `(ω_imu, ω_lidar)` pairs at lidar rate midpoints shifted by `t_d`.
pub fn paired_rates(
    imu: &[ImuSample],
    lidar_rates: &[(Timestamp, Vec3)],
    t_d: f64,
) -> Vec<(Vec3, Vec3)> {
    lidar_rates
        .iter()
        .filter_map(|(t, w)| interpolate_gyro(imu, *t + t_d).map(|g| (g, *w)))
        .collect()
}

/// Full pipeline: rates → Hermite norm series → offset → aligned pairs → rotation.
pub fn calibrate_lidar_imu(
    imu: &[ImuSample],
    lidar_traj: &Trajectory,
    window: f64,
    period: f64,
) -> Result<(TimeOffsetEstimate, RotationEstimate)> {
    if imu.len() < 2 {
        return Err(Error::InsufficientData {
            what: "imu samples",
            needed: 2,
            got: imu.len(),
        }
        .at_stage("input"));
    }
    if let Some(i) = imu.windows(2).position(|w| w[1].t <= w[0].t) {
        return Err(Error::Ordering {
            what: "imu timestamps",
            index: i + 1,
        }
        .at_stage("input"));
    }
    let shared = imu[imu.len() - 1].t.min(lidar_traj.end()) - imu[0].t.max(lidar_traj.start());
    if shared < MIN_CALIBRATION_SPAN {
        return Err(Error::NoOverlap(format!(
            "imu and lidar share {shared:.3} s, need {MIN_CALIBRATION_SPAN} s"
        ))
        .at_stage("input"));
    }
    let lidar_rates =
        angular_rates_from_trajectory(lidar_traj).map_err(|e| e.at_stage("lidar rates"))?;
    let gyro: Vec<(Timestamp, Vec3)> = imu.iter().map(|s| (s.t, s.gyro)).collect();
    let imu_series =
        rate_norm_series_hermite(&gyro, period).map_err(|e| e.at_stage("imu resample"))?;
    let lidar_series =
        rate_norm_series_hermite(&lidar_rates, period).map_err(|e| e.at_stage("lidar resample"))?;
    let offset = estimate_time_offset(&imu_series, &lidar_series, window)
        .map_err(|e| e.at_stage("time offset"))?;
    let pairs = paired_rates(imu, &lidar_rates, offset.t_d);
    let rotation = estimate_rotation_tls(&pairs).map_err(|e| e.at_stage("rotation"))?;
    Ok((offset, rotation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{so3_exp, Pose};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ts(s: f64) -> Timestamp {
        Timestamp::from_secs(s)
    }

    #[test]
    fn static_trajectory_has_zero_rates() {
        let traj = Trajectory::new((0..10).map(|i| Pose::identity(ts(i as f64 * 0.1))).collect()).unwrap();
        for (_, w) in angular_rates_from_trajectory(&traj).unwrap() {
            assert_eq!(w, Vec3::zeros());
        }
    }

    #[test]
    fn constant_yaw_rate_is_exact() {
        let poses = (0..20)
            .map(|i| {
                let t = i as f64 * 0.1;
                Pose::new(ts(t), so3_exp(&Vec3::new(0.0, 0.0, 0.5 * t)), Vec3::zeros())
            })
            .collect();
        let rates = angular_rates_from_trajectory(&Trajectory::new(poses).unwrap()).unwrap();
        assert_eq!(rates.len(), 19);
        for (i, (t, w)) in rates.iter().enumerate() {
            assert!((t.secs() - (i as f64 * 0.1 + 0.05)).abs() < 1e-12);
            assert!((w - Vec3::new(0.0, 0.0, 0.5)).norm() < 1e-9);
        }
    }

    #[test]
    fn single_pose_is_insufficient() {
        let traj = Trajectory::new(vec![Pose::identity(ts(0.0))]).unwrap();
        assert!(matches!(
            angular_rates_from_trajectory(&traj),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn resampling_cases() {
        let constant: Vec<_> = (0..11).map(|i| (ts(i as f64 * 0.1), Vec3::new(0.3, 0.0, 0.4))).collect();
        let s = rate_norm_series(&constant, 0.01).unwrap();
        assert_eq!(s.len(), 101);
        assert!(s.values().iter().all(|v| (v - 0.5).abs() < 1e-15));

        let two = [(ts(0.0), Vec3::zeros()), (ts(1.0), Vec3::new(0.0, 1.0, 0.0))];
        let s = rate_norm_series(&two, 0.5).unwrap();
        assert_eq!(s.values(), &[0.0, 0.5, 1.0]);

        let uniform: Vec<_> = (0..50).map(|i| (ts(2.0 + i as f64 * 0.005), Vec3::new(i as f64, 0.0, 0.0))).collect();
        let s = rate_norm_series(&uniform, 0.005).unwrap();
        assert_eq!(s.len(), 50);
        for (i, v) in s.values().iter().enumerate() {
            assert!((v - i as f64).abs() < 1e-9);
        }

        assert!(rate_norm_series(&two, 1.0).is_err());
        assert!(rate_norm_series(&two, 0.0).is_err());
    }

    #[test]
    fn hermite_resampling_cases() {
        let two = [(ts(0.0), Vec3::zeros()), (ts(1.0), Vec3::new(0.0, 1.0, 0.0))];
        let s = rate_norm_series_hermite(&two, 0.5).unwrap();
        assert_eq!(s.values(), &[0.0, 0.5, 1.0]);

        let uniform: Vec<_> = (0..50).map(|i| (ts(2.0 + i as f64 * 0.005), Vec3::new(i as f64, 1.0, 0.0))).collect();
        let s = rate_norm_series_hermite(&uniform, 0.005).unwrap();
        assert_eq!(s.len(), 50);
        for (i, v) in s.values().iter().enumerate() {
            assert!((v - Vec3::new(i as f64, 1.0, 0.0).norm()).abs() < 1e-9);
        }

        assert!(rate_norm_series_hermite(&[], 0.01).is_err());
        assert!(rate_norm_series_hermite(&two, 0.0).is_err());
    }

    #[test]
    fn hermite_tracks_sparse_rates_better_than_linear() {
        let omega = |t: f64| Vec3::new((2.1 * t).sin(), 0.5 * (1.3 * t).cos(), 0.2);
        let sparse: Vec<_> = (0..=100).map(|i| (ts(i as f64 * 0.1), omega(i as f64 * 0.1))).collect();
        let err = |s: RateSeries| {
            s.values()
                .iter()
                .enumerate()
                .map(|(i, v)| (v - omega(i as f64 * 0.01).norm()).abs())
                .fold(0.0f64, f64::max)
        };
        let linear = err(rate_norm_series(&sparse, 0.01).unwrap());
        let cubic = err(rate_norm_series_hermite(&sparse, 0.01).unwrap());
        assert!(cubic < 5e-3, "{cubic}");
        assert!(cubic < 0.2 * linear, "{cubic} vs {linear}");
    }

    fn burst_series(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<f64> = (0..n / 200).map(|_| rng.random::<f64>() * n as f64).collect();
        (0..n)
            .map(|i| {
                centers
                    .iter()
                    .map(|c| (-((i as f64 - c) / 30.0).powi(2)).exp())
                    .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn identical_series_give_zero_offset() {
        let v = burst_series(3000, 1);
        let a = RateSeries::new(ts(10.0), 0.01, v.clone()).unwrap();
        let b = RateSeries::new(ts(10.0), 0.01, v).unwrap();
        let est = estimate_time_offset(&a, &b, 0.5).unwrap();
        assert!(est.t_d.abs() < 1e-12);
        assert!((est.peak_correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_start_is_recovered_and_antisymmetric() {
        let v = burst_series(3000, 2);
        // Same samples, lidar stamped 70 ms early.
        let imu = RateSeries::new(ts(10.0), 0.01, v.clone()).unwrap();
        let lidar = RateSeries::new(ts(9.93), 0.01, v).unwrap();
        let fwd = estimate_time_offset(&imu, &lidar, 0.5).unwrap();
        assert!((fwd.t_d - 0.07).abs() < 1e-9);
        let back = estimate_time_offset(&lidar, &imu, 0.5).unwrap();
        assert!((fwd.t_d + back.t_d).abs() <= 0.005);
    }

    #[test]
    fn flat_series_is_degenerate() {
        let a = RateSeries::new(ts(0.0), 0.01, vec![0.0; 2000]).unwrap();
        let b = RateSeries::new(ts(0.0), 0.01, burst_series(2000, 3)).unwrap();
        assert!(matches!(
            estimate_time_offset(&b, &a, 0.5),
            Err(Error::DegenerateMotion(_))
        ));
    }

    #[test]
    fn short_overlap_is_rejected() {
        let a = RateSeries::new(ts(0.0), 0.01, burst_series(800, 4)).unwrap();
        assert!(matches!(
            estimate_time_offset(&a, &a, 0.5),
            Err(Error::NoOverlap(_))
        ));
    }

    #[test]
    fn uncorrelated_series_are_low_confidence() {
        let a = RateSeries::new(ts(0.0), 0.01, burst_series(3000, 5)).unwrap();
        let b = RateSeries::new(ts(0.0), 0.01, burst_series(3000, 6)).unwrap();
        match estimate_time_offset(&a, &b, 0.5) {
            Err(Error::LowConfidence { peak, .. }) => assert!(peak < 0.5),
            other => panic!("expected low confidence, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_periods_rejected() {
        let a = RateSeries::new(ts(0.0), 0.01, vec![0.0; 10]).unwrap();
        let b = RateSeries::new(ts(0.0), 0.02, vec![0.0; 10]).unwrap();
        assert!(estimate_time_offset(&a, &b, 0.5).is_err());
        assert!(RateSeries::new(ts(0.0), 0.0, vec![]).is_err());
        assert!(RateSeries::new(ts(0.0), 0.01, vec![-1.0]).is_err());
    }

    fn random_rates(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_noise_free() {
        let pairs: Vec<_> = random_rates(100, 1).into_iter().map(|w| (w, w)).collect();
        let est = estimate_rotation_tls(&pairs).unwrap();
        assert!(est.rotation.angle() < 1e-12);
        assert!(est.rms_residual < 1e-12);
        assert_eq!(est.inlier_count, 100);
        assert_eq!(est.truncation_rounds, 0);
    }

    #[test]
    fn noise_free_matches_closed_form() {
        let r = Rotation::from_axis_angle(&Vec3::new(1.0, -2.0, 0.5), 1.1);
        let pairs: Vec<_> = random_rates(50, 2)
            .into_iter()
            .map(|w| (r.rotate(&w), w))
            .collect();
        let est = estimate_rotation_tls(&pairs).unwrap();
        assert_eq!(est.truncation_rounds, 0);
        assert!(est.rotation.angle_to(&r) < 1e-12);
        assert!(est.rotation.angle_to(&procrustes(&pairs, &[true; 50])) == 0.0);
    }

    #[test]
    fn single_axis_is_degenerate() {
        let pairs: Vec<_> = (0..50)
            .map(|i| {
                let w = Vec3::new(0.0, 0.0, (i as f64 * 0.3).sin());
                (w, w)
            })
            .collect();
        assert!(matches!(
            estimate_rotation_tls(&pairs),
            Err(Error::DegenerateMotion(_))
        ));
        assert!(matches!(
            estimate_rotation_tls(&pairs[..2]),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn determinant_is_positive() {
        // A reflection fits the raw data best; the solution must stay proper.
        let pairs: Vec<_> = random_rates(30, 9)
            .into_iter()
            .map(|w| (Vec3::new(-w.x, w.y, w.z), w))
            .collect();
        let est = estimate_rotation_tls(&pairs).unwrap();
        assert!((est.rotation.matrix().determinant() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gyro_interpolation() {
        let imu = [
            ImuSample { t: ts(0.0), gyro: Vec3::zeros(), accel: Vec3::zeros() },
            ImuSample { t: ts(1.0), gyro: Vec3::new(1.0, 2.0, 3.0), accel: Vec3::zeros() },
        ];
        assert_eq!(interpolate_gyro(&imu, ts(0.25)), Some(Vec3::new(0.25, 0.5, 0.75)));
        assert_eq!(interpolate_gyro(&imu, ts(1.0)), Some(Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(interpolate_gyro(&imu, ts(1.5)), None);
    }
}
