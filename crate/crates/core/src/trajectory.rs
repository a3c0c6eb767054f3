use crate::error::{Error, Result};
use crate::geometry::{Pose, Timestamp};

/// Time-ordered sequence of poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::InsufficientData {
                what: "trajectory",
                needed: 1,
                got: 0,
            });
        }
        if let Some(i) = poses.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::Ordering {
                what: "trajectory timestamps",
                index: i + 1,
            });
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn into_poses(self) -> Vec<Pose> {
        self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn start(&self) -> Timestamp {
        self.poses[0].t
    }

    pub fn end(&self) -> Timestamp {
        self.poses[self.poses.len() - 1].t
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start() && t <= self.end()
    }

    /// Pose at `t`: lerp on translation, slerp on rotation between the
    /// bracketing knots. Exact knot poses are returned unchanged.
    pub fn interpolate(&self, t: Timestamp) -> Result<Pose> {
        if !self.contains(t) {
            return Err(Error::OutOfRange {
                t: t.secs(),
                start: self.start().secs(),
                end: self.end().secs(),
            });
        }
        let hi = self.poses.partition_point(|p| p.t < t);
        let p1 = &self.poses[hi];
        if p1.t == t {
            return Ok(*p1);
        }
        let p0 = &self.poses[hi - 1];
        let u = (t - p0.t) / (p1.t - p0.t);
        Ok(Pose {
            t,
            rotation: p0.rotation.slerp(&p1.rotation, u),
            translation: p0.translation + (p1.translation - p0.translation) * u,
        })
    }

    /// Left-multiplies every pose by `transform` (a change of world frame).
    pub fn transformed(&self, transform: &Pose) -> Trajectory {
        Trajectory {
            poses: self
                .poses
                .iter()
                .map(|p| transform.compose(p).with_time(p.t))
                .collect(),
        }
    }

    /// Shifts every timestamp by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(|p| p.with_time(p.t + dt)).collect(),
        }
    }
}

/// Free-function form of [`Trajectory::interpolate`].
pub fn interpolate_pose(traj: &Trajectory, t: Timestamp) -> Result<Pose> {
    traj.interpolate(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{so3_exp, so3_log, Rotation, Vec3};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn ts(s: f64) -> Timestamp {
        Timestamp::from_secs(s)
    }

    fn yaw_pair() -> Trajectory {
        Trajectory::new(vec![
            Pose::identity(ts(0.0)),
            Pose::new(
                ts(1.0),
                so3_exp(&Vec3::new(0.0, 0.0, FRAC_PI_2)),
                Vec3::new(2.0, 0.0, 0.0),
            ),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_ties_and_inversions() {
        let p = Pose::identity(ts(1.0));
        assert!(matches!(
            Trajectory::new(vec![p, p]),
            Err(Error::Ordering { index: 1, .. })
        ));
        assert!(Trajectory::new(vec![p, Pose::identity(ts(0.5))]).is_err());
        assert!(Trajectory::new(vec![]).is_err());
    }

    #[test]
    fn knot_returns_exact_pose() {
        let traj = yaw_pair();
        assert_eq!(traj.interpolate(ts(1.0)).unwrap(), traj.poses()[1]);
        assert_eq!(traj.interpolate(ts(0.0)).unwrap(), traj.poses()[0]);
    }

    #[test]
    fn midpoint_is_half_yaw_half_translation() {
        let mid = yaw_pair().interpolate(ts(0.5)).unwrap();
        assert!((so3_log(&mid.rotation) - Vec3::new(0.0, 0.0, FRAC_PI_4)).norm() < 1e-14);
        assert!((mid.translation - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn out_of_range_names_interval() {
        let err = yaw_pair().interpolate(ts(1.5)).unwrap_err();
        match err {
            Error::OutOfRange { start, end, .. } => {
                assert_eq!((start, end), (0.0, 1.0));
            }
            e => panic!("unexpected {e}"),
        }
        assert!(err_string(yaw_pair().interpolate(ts(-0.1))).contains("[0.000000000, 1.000000000]"));
    }

    fn err_string(r: Result<Pose>) -> String {
        r.unwrap_err().to_string()
    }

    #[test]
    fn continuity() {
        let traj = yaw_pair();
        let eps = 1e-7;
        for &t in &[0.1, 0.37, 0.9] {
            let a = traj.interpolate(ts(t)).unwrap();
            let b = traj.interpolate(ts(t + eps)).unwrap();
            assert!(a.rotation.angle_to(&b.rotation) < 10.0 * eps);
            assert!((a.translation - b.translation).norm() < 10.0 * eps);
        }
    }

    #[test]
    fn transformed_composes_on_the_left() {
        let traj = yaw_pair();
        let tf = Pose::transform(Rotation::from_axis_angle(&Vec3::x(), 0.3), Vec3::new(1.0, 2.0, 3.0));
        let moved = traj.transformed(&tf);
        let back = moved.transformed(&tf.inverse());
        for (a, b) in traj.poses().iter().zip(back.poses()) {
            assert_eq!(a.t, b.t);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-12);
            assert!((a.translation - b.translation).norm() < 1e-12);
        }
    }
}
