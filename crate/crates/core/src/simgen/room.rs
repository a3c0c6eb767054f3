use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{AnalyticTrajectory, SimConfig, STREAM_ROOM};
use crate::error::{invalid, Result};
use crate::geometry::{Timestamp, Vec3};
use crate::mapping::{LidarPoint, LidarScan, PointCloud, MIN_RANGE};

/// Axis-aligned box room centered at the origin, scanned by a spinning
/// multi-line lidar (one revolution per scan).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    /// Full extents along x, y, z, m.
    pub dims: [f64; 3],
    pub points_per_scan: usize,
    pub lines: usize,
    /// Elevation of the lowest and highest line, rad.
    pub min_elevation: f64,
    pub max_elevation: f64,
    pub scan_period: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        RoomConfig {
            dims: [10.0, 8.0, 3.0],
            points_per_scan: 4000,
            lines: 16,
            min_elevation: -0.9,
            max_elevation: 0.9,
            scan_period: 0.1,
        }
    }
}

impl RoomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(invalid(format!("room dims must be positive, got {:?}", self.dims)));
        }
        if self.points_per_scan == 0 || self.lines == 0 {
            return Err(invalid("room scans need at least one line and one point"));
        }
        if !(self.scan_period > 0.0 && self.scan_period < 0.2) {
            return Err(invalid(format!(
                "scan period must be in (0, 0.2) s, got {}",
                self.scan_period
            )));
        }
        Ok(())
    }

    pub fn half_extents(&self) -> Vec3 {
        Vec3::from(self.dims) * 0.5
    }
}

/// Exact world-frame hit for one generated point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthPoint {
    pub world: Vec3,
    /// Wall index: 0/1 = −x/+x, 2/3 = −y/+y, 4/5 = floor/ceiling.
    pub plane: u8,
}

#[derive(Debug, Clone)]
pub struct RoomScans {
    pub scans: Vec<LidarScan>,
    /// `truth[i][j]` belongs to `scans[i].points[j]`.
    pub truth: Vec<Vec<TruthPoint>>,
}

/// Distance along `dir` from interior point `origin` to the box wall.
fn ray_box(origin: &Vec3, dir: &Vec3, half: &Vec3) -> Option<(f64, u8)> {
    let mut best: Option<(f64, u8)> = None;
    for k in 0..3 {
        if dir[k] == 0.0 {
            continue;
        }
        let (bound, plane) = if dir[k] > 0.0 {
            (half[k], 2 * k as u8 + 1)
        } else {
            (-half[k], 2 * k as u8)
        };
        let t = (bound - origin[k]) / dir[k];
        if t > 0.0 && best.is_none_or(|(b, _)| t < b) {
            best = Some((t, plane));
        }
    }
    best
}

/// Ray-casts the room from the moving sensor; every point is stamped with
/// its capture offset `dt` and expressed in the sensor frame at capture.
pub fn gen_room_scans(cfg: &SimConfig, analytic: &AnalyticTrajectory) -> Result<RoomScans> {
    cfg.validate()?;
    let room = &cfg.room;
    room.validate()?;
    let half = room.half_extents();
    let n_scans = ((cfg.duration / room.scan_period) * (1.0 + 1e-12)).floor() as usize;
    let mut scans = Vec::with_capacity(n_scans);
    let mut truth = Vec::with_capacity(n_scans);
    for s in 0..n_scans {
        let scan_start = Timestamp::from_secs(cfg.start_time + s as f64 * room.scan_period);
        let mut points = Vec::with_capacity(room.points_per_scan);
        let mut hits = Vec::with_capacity(room.points_per_scan);
        for i in 0..room.points_per_scan {
            let frac = i as f64 / room.points_per_scan as f64;
            let dt = frac * room.scan_period;
            let line = i % room.lines;
            let elevation = if room.lines == 1 {
                0.5 * (room.min_elevation + room.max_elevation)
            } else {
                room.min_elevation
                    + (room.max_elevation - room.min_elevation) * line as f64
                        / (room.lines - 1) as f64
            };
            let azimuth = TAU * frac;
            let dir_sensor = Vec3::new(
                elevation.cos() * azimuth.cos(),
                elevation.cos() * azimuth.sin(),
                elevation.sin(),
            );
            let pose = analytic.pose(scan_start + dt);
            if (0..3).any(|k| pose.translation[k].abs() >= half[k]) {
                return Err(invalid(format!(
                    "sensor at {:?} is outside the room",
                    pose.translation.as_slice()
                )));
            }
            let dir = pose.rotation.rotate(&dir_sensor);
            let Some((range, plane)) = ray_box(&pose.translation, &dir, &half) else {
                continue;
            };
            if range <= MIN_RANGE {
                continue;
            }
            let world = pose.translation + dir * range;
            points.push(LidarPoint {
                position: dir_sensor * range,
                intensity: 10.0 * plane as f32,
                dt,
            });
            hits.push(TruthPoint { world, plane });
        }
        scans.push(LidarScan::new(scan_start, points)?);
        truth.push(hits);
    }
    Ok(RoomScans { scans, truth })
}

/// Area-uniform samples on the six walls of a `dims` box, with wall labels.
pub fn sample_room_surface(dims: [f64; 3], n: usize, seed: u64) -> Result<(PointCloud, Vec<u8>)> {
    if dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(invalid(format!("room dims must be positive, got {dims:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_ROOM);
    let h = Vec3::from(dims) * 0.5;
    let areas = [dims[1] * dims[2], dims[0] * dims[2], dims[0] * dims[1]];
    let total = 2.0 * areas.iter().sum::<f64>();
    let unit = Uniform::new(0.0, 1.0).map_err(|e| invalid(e.to_string()))?;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pick = unit.sample(&mut rng) * total;
        let mut plane = 5u8;
        for (p, a) in [areas[0], areas[0], areas[1], areas[1], areas[2], areas[2]]
            .iter()
            .enumerate()
        {
            if pick < *a {
                plane = p as u8;
                break;
            }
            pick -= a;
        }
        let axis = (plane / 2) as usize;
        let mut p = Vec3::zeros();
        for k in 0..3 {
            p[k] = if k == axis {
                if plane % 2 == 1 {
                    h[k]
                } else {
                    -h[k]
                }
            } else {
                (2.0 * unit.sample(&mut rng) - 1.0) * h[k]
            };
        }
        points.push(p);
        labels.push(plane);
    }
    Ok((PointCloud::from_positions(points), labels))
}
