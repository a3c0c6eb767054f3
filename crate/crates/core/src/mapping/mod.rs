//! Map construction and map accuracy.

mod distance;
mod icp;
pub mod index;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use distance::{cloud_to_cloud_distance, fit_plane, C2cResult, Plane};
pub use icp::{icp_refine, IcpParams, IcpResult, IcpStop};
pub use index::GridIndex;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Pose, Timestamp, Vec3};
use crate::trajectory::Trajectory;

/// Returns closer than this are self-hits and dropped at ingest, m.
pub const MIN_RANGE: f64 = 0.05;
/// Largest per-point offset from scan start, s (twice the 10 Hz period).
pub const MAX_POINT_DT: f64 = 0.2;
pub const DEFAULT_C2C_RADIUS: f64 = 0.3;
pub const DEFAULT_C2C_MAX_DIST: f64 = 0.7;
/// On-disk record size used to turn a byte budget into a point count.
pub const BYTES_PER_POINT: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    /// Sensor frame, m.
    pub position: Vec3,
    pub intensity: f32,
    /// Capture time relative to scan start, s.
    pub dt: f64,
}

/// One lidar sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub scan_start: Timestamp,
    pub points: Vec<LidarPoint>,
}

impl LidarScan {
    /// Validates points and drops returns closer than [`MIN_RANGE`].
    pub fn new(scan_start: Timestamp, points: Vec<LidarPoint>) -> Result<Self> {
        let mut kept = Vec::with_capacity(points.len());
        for (i, p) in points.into_iter().enumerate() {
            if !p.position.iter().all(|c| c.is_finite()) {
                return Err(invalid(format!("scan point {i} has non-finite coordinates")));
            }
            if !(p.dt >= 0.0 && p.dt < MAX_POINT_DT) {
                return Err(invalid(format!(
                    "scan point {i} has time offset {} outside [0, {MAX_POINT_DT})",
                    p.dt
                )));
            }
            if p.position.norm() > MIN_RANGE {
                kept.push(p);
            }
        }
        Ok(LidarScan {
            scan_start,
            points: kept,
        })
    }

    pub fn max_dt(&self) -> f64 {
        self.points.iter().map(|p| p.dt).fold(0.0, f64::max)
    }

    pub fn positions(&self) -> impl Iterator<Item = &Vec3> {
        self.points.iter().map(|p| &p.position)
    }
}

/// Unordered point set with optional attributes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    positions: Vec<Vec3>,
    intensity: Option<Vec<f32>>,
    color: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        PointCloud {
            positions,
            intensity: None,
            color: None,
        }
    }

    pub fn with_intensity(mut self, intensity: Vec<f32>) -> Result<Self> {
        if intensity.len() != self.positions.len() {
            return Err(invalid("intensity length differs from point count"));
        }
        self.intensity = Some(intensity);
        Ok(self)
    }

    pub fn with_color(mut self, color: Vec<[u8; 3]>) -> Result<Self> {
        if color.len() != self.positions.len() {
            return Err(invalid("color length differs from point count"));
        }
        self.color = Some(color);
        Ok(self)
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn intensity(&self) -> Option<&[f32]> {
        self.intensity.as_deref()
    }

    pub fn color(&self) -> Option<&[[u8; 3]]> {
        self.color.as_deref()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        match self.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            Some(i) => Err(invalid(format!("point {i} has non-finite coordinates"))),
            None => Ok(()),
        }
    }

    /// Points at `indices`, attributes carried along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|i| self.positions[*i]).collect(),
            intensity: self
                .intensity
                .as_ref()
                .map(|v| indices.iter().map(|i| v[*i]).collect()),
            color: self
                .color
                .as_ref()
                .map(|v| indices.iter().map(|i| v[*i]).collect()),
        }
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            positions: self.positions.iter().map(|p| pose.transform_point(p)).collect(),
            intensity: self.intensity.clone(),
            color: self.color.clone(),
        }
    }

    /// Axis-aligned bounds `(min, max)`; `None` when empty.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(
            self.positions
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }
}

/// Moves every point from its capture-time sensor pose into the sensor
/// pose at scan start: `p' = T(start)⁻¹ · T(start + dt) · p`.
/// Time offsets are kept for traceability.
pub fn undistort_scan(scan: &LidarScan, traj: &Trajectory) -> Result<LidarScan> {
    let wrap = |e: Error| Error::Scan {
        start: scan.scan_start.secs(),
        source: Box::new(e),
    };
    let anchor_inv = traj.interpolate(scan.scan_start).map_err(wrap)?.inverse();
    let last = scan.scan_start + scan.max_dt();
    if !traj.contains(last) {
        return Err(wrap(Error::OutOfRange {
            t: last.secs(),
            start: traj.start().secs(),
            end: traj.end().secs(),
        }));
    }
    let points = scan
        .points
        .iter()
        .map(|p| {
            let at = traj.interpolate(scan.scan_start + p.dt).map_err(wrap)?;
            Ok(LidarPoint {
                position: anchor_inv.compose(&at).transform_point(&p.position),
                ..*p
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LidarScan {
        scan_start: scan.scan_start,
        points,
    })
}

fn collect_world(scans: &[LidarScan], traj: &Trajectory, undistort: bool) -> Result<PointCloud> {
    let total: usize = scans.iter().map(|s| s.points.len()).sum();
    let mut positions = Vec::with_capacity(total);
    let mut intensity = Vec::with_capacity(total);
    for scan in scans {
        let owned;
        let source = if undistort {
            owned = undistort_scan(scan, traj)?;
            &owned
        } else {
            scan
        };
        let pose = traj.interpolate(scan.scan_start).map_err(|e| Error::Scan {
            start: scan.scan_start.secs(),
            source: Box::new(e),
        })?;
        for p in &source.points {
            positions.push(pose.transform_point(&p.position));
            intensity.push(p.intensity);
        }
    }
    PointCloud::from_positions(positions).with_intensity(intensity)
}

/// Undistorts each scan and places it in the world frame with the pose
/// interpolated at its start time.
pub fn aggregate_map(scans: &[LidarScan], traj: &Trajectory) -> Result<PointCloud> {
    collect_world(scans, traj, true)
}

/// Like [`aggregate_map`] but trusts scans to be undistorted already.
pub fn aggregate_map_raw(scans: &[LidarScan], traj: &Trajectory) -> Result<PointCloud> {
    collect_world(scans, traj, false)
}

/// Uniform sample of `min(target, len)` points without replacement,
/// reproducible for a fixed seed. Input order is preserved.
pub fn random_downsample(cloud: &PointCloud, target_points: usize, seed: u64) -> PointCloud {
    if target_points >= cloud.len() {
        return cloud.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, cloud.len(), target_points).into_vec();
    picked.sort_unstable();
    cloud.select(&picked)
}

/// Point budget matching a file-size target in bytes.
pub fn points_for_bytes(bytes: u64) -> usize {
    (bytes / BYTES_PER_POINT).max(1) as usize
}

/// Pinhole camera with a lidar-to-camera extrinsic.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// `p_camera = T · p_lidar`; the timestamp is ignored.
    pub camera_from_lidar: Pose,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        camera_from_lidar: Pose,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(invalid(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(invalid(format!(
                "principal point ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        Ok(CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            camera_from_lidar,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    /// Index of the source point.
    pub index: usize,
}

/// Projects lidar points into the image; points behind the camera or
/// outside the image are dropped.
pub fn project_to_image(cloud: &PointCloud, cam: &CameraModel) -> Vec<Projection> {
    cloud
        .positions()
        .iter()
        .enumerate()
        .filter_map(|(index, p)| {
            let pc = cam.camera_from_lidar.transform_point(p);
            if pc.z <= 0.0 {
                return None;
            }
            let u = cam.fx * pc.x / pc.z + cam.cx;
            let v = cam.fy * pc.y / pc.z + cam.cy;
            let inside = u >= 0.0 && u < cam.width as f64 && v >= 0.0 && v < cam.height as f64;
            inside.then_some(Projection {
                u,
                v,
                depth: pc.z,
                index,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{so3_exp, Rotation};

    fn ts(s: f64) -> Timestamp {
        Timestamp::from_secs(s)
    }

    fn point(x: f64, y: f64, z: f64, dt: f64) -> LidarPoint {
        LidarPoint {
            position: Vec3::new(x, y, z),
            intensity: 1.0,
            dt,
        }
    }

    fn yawing(rate: f64) -> Trajectory {
        Trajectory::new(
            (0..=20)
                .map(|i| {
                    let t = i as f64 * 0.1;
                    Pose::new(ts(t), so3_exp(&Vec3::new(0.0, 0.0, rate * t)), Vec3::new(0.3 * t, 0.0, 0.0))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn scan_validation() {
        let s = LidarScan::new(ts(0.0), vec![point(0.01, 0.0, 0.0, 0.0), point(1.0, 0.0, 0.0, 0.05)]).unwrap();
        assert_eq!(s.points.len(), 1);
        assert!(LidarScan::new(ts(0.0), vec![point(1.0, 0.0, 0.0, 0.25)]).is_err());
        assert!(LidarScan::new(ts(0.0), vec![point(1.0, 0.0, 0.0, -0.01)]).is_err());
        assert!(LidarScan::new(ts(0.0), vec![point(f64::NAN, 0.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn stationary_undistort_is_identity() {
        let traj = Trajectory::new(vec![Pose::identity(ts(0.0)), Pose::identity(ts(1.0))]).unwrap();
        let scan = LidarScan::new(ts(0.2), vec![point(1.0, 2.0, 3.0, 0.05), point(-4.0, 0.5, 1.0, 0.09)]).unwrap();
        assert_eq!(undistort_scan(&scan, &traj).unwrap(), scan);
    }

    #[test]
    fn anchor_time_point_is_unchanged() {
        let scan = LidarScan::new(ts(0.5), vec![point(3.0, -1.0, 0.5, 0.0)]).unwrap();
        let out = undistort_scan(&scan, &yawing(1.0)).unwrap();
        assert!((out.points[0].position - scan.points[0].position).norm() < 1e-12);
    }

    #[test]
    fn coverage_gap_names_scan() {
        let scan = LidarScan::new(ts(1.95), vec![point(3.0, 0.0, 0.0, 0.09)]).unwrap();
        let err = undistort_scan(&scan, &yawing(1.0)).unwrap_err();
        assert!(matches!(err, Error::Scan { .. }));
        assert!(err.to_string().contains("1.950000000"));
        let outside = LidarScan::new(ts(5.0), vec![point(3.0, 0.0, 0.0, 0.0)]).unwrap();
        assert!(aggregate_map(&[outside], &yawing(1.0)).is_err());
    }

    #[test]
    fn single_scan_identity_pose_aggregates_to_itself() {
        let traj = Trajectory::new(vec![Pose::identity(ts(0.0)), Pose::identity(ts(1.0))]).unwrap();
        let scan = LidarScan::new(ts(0.0), vec![point(1.0, 2.0, 3.0, 0.0), point(4.0, 5.0, 6.0, 0.01)]).unwrap();
        let cloud = aggregate_map(std::slice::from_ref(&scan), &traj).unwrap();
        let want: Vec<Vec3> = scan.positions().copied().collect();
        assert_eq!(cloud.positions(), &want[..]);
    }

    #[test]
    fn aggregate_commutes_with_rigid_transform() {
        let traj = yawing(0.8);
        let scans: Vec<_> = (0..5)
            .map(|k| {
                LidarScan::new(
                    ts(0.1 + 0.3 * k as f64),
                    (0..40).map(|i| point(2.0 + 0.1 * i as f64, -1.0, 0.4, i as f64 * 0.002)).collect(),
                )
                .unwrap()
            })
            .collect();
        let base = aggregate_map(&scans, &traj).unwrap();
        let tf = Pose::transform(Rotation::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.7), Vec3::new(5.0, -2.0, 1.0));
        let moved = aggregate_map(&scans, &traj.transformed(&tf)).unwrap().transformed(&tf.inverse());
        for (a, b) in base.positions().iter().zip(moved.positions()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn downsample_is_deterministic_and_exact() {
        let cloud = PointCloud::from_positions((0..1000).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect());
        let a = random_downsample(&cloud, 100, 7);
        let b = random_downsample(&cloud, 100, 7);
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        assert_ne!(a, random_downsample(&cloud, 100, 8));
        assert_eq!(random_downsample(&cloud, 5000, 1), cloud);
        assert_eq!(points_for_bytes(20_000_000), 1_250_000);
    }

    fn camera(tf: Pose) -> CameraModel {
        CameraModel::new(500.0, 510.0, 320.0, 240.0, 640, 480, tf).unwrap()
    }

    #[test]
    fn principal_point_and_behind_camera() {
        let cam = camera(Pose::transform(Rotation::identity(), Vec3::zeros()));
        let cloud = PointCloud::from_positions(vec![Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, -2.0), Vec3::new(100.0, 0.0, 1.0)]);
        let out = project_to_image(&cloud, &cam);
        assert_eq!(out, vec![Projection { u: 320.0, v: 240.0, depth: 2.0, index: 0 }]);
    }

    #[test]
    fn camera_validation() {
        let tf = Pose::transform(Rotation::identity(), Vec3::zeros());
        assert!(CameraModel::new(0.0, 1.0, 1.0, 1.0, 10, 10, tf).is_err());
        assert!(CameraModel::new(1.0, 1.0, 11.0, 1.0, 10, 10, tf).is_err());
    }
}
