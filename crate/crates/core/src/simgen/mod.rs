//! Synthetic datasets with known ground truth.
//!
//! All generators are pure functions of a [`SimConfig`]; randomness comes
//! from ChaCha streams derived from `seed`, one stream per generator, so
//! regenerating any single output never perturbs the others.

mod motion;
mod room;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub use motion::{AnalyticTrajectory, KinematicState, MotionConfig};
pub use room::{gen_room_scans, sample_room_surface, RoomConfig, RoomScans, TruthPoint};

use crate::clocksync::TimestampPair;
use crate::error::{invalid, Result};
use crate::geometry::{so3_exp, Pose, Rotation, Timestamp, Vec3};
use crate::tempcal::ImuSample;
use crate::trajectory::Trajectory;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockSimConfig {
    pub sensor_rate: f64,
    pub count: usize,
    /// Smallest transmission delay, s.
    pub min_delay: f64,
    /// Width of the uniform delay jitter above `min_delay`, s.
    pub jitter_scale: f64,
    pub skew_ppm: f64,
    /// Host-minus-sensor clock offset, s.
    pub offset: f64,
}

impl Default for ClockSimConfig {
    fn default() -> Self {
        ClockSimConfig {
            sensor_rate: 200.0,
            count: 2000,
            min_delay: 0.002,
            jitter_scale: 0.010,
            skew_ppm: 10.0,
            offset: 5.0,
        }
    }
}

impl ClockSimConfig {
    pub fn skew(&self) -> f64 {
        1.0 + self.skew_ppm * 1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub duration: f64,
    pub seed: u64,
    pub start_time: f64,
    pub motion: MotionConfig,
    pub imu_rate: f64,
    pub odom_rate: f64,
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// rad/s
    pub gyro_bias: [f64; 3],
    /// Per-pose rotation noise of the simulated odometry, rad.
    pub odom_rotation_noise: f64,
    /// Per-pose translation noise of the simulated odometry, m.
    pub odom_translation_noise: f64,
    /// Correction that maps lidar stamps onto the IMU timeline, s.
    pub injected_offset: f64,
    /// Lidar-to-IMU rotation as a rotation vector, rad.
    pub injected_rotation: [f64; 3],
    pub clock: ClockSimConfig,
    pub room: RoomConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 60.0,
            seed: 0,
            start_time: 1000.0,
            motion: MotionConfig::default(),
            imu_rate: 200.0,
            odom_rate: 10.0,
            gyro_noise_density: 0.01 / 200f64.sqrt(),
            gyro_bias: [0.0; 3],
            odom_rotation_noise: 0.0,
            odom_translation_noise: 0.0,
            injected_offset: 0.0,
            injected_rotation: [0.0; 3],
            clock: ClockSimConfig::default(),
            room: RoomConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration", self.duration),
            ("imu_rate", self.imu_rate),
            ("odom_rate", self.odom_rate),
            ("clock.sensor_rate", self.clock.sensor_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        let nonneg = [
            ("gyro_noise_density", self.gyro_noise_density),
            ("odom_rotation_noise", self.odom_rotation_noise),
            ("odom_translation_noise", self.odom_translation_noise),
            ("clock.jitter_scale", self.clock.jitter_scale),
            ("clock.min_delay", self.clock.min_delay),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.motion.bursts > 0 && !(self.motion.burst_width > 0.0) {
            return Err(invalid("motion.burst_width must be > 0 when bursts are enabled"));
        }
        Ok(())
    }

    pub fn injected_rotation(&self) -> Rotation {
        so3_exp(&Vec3::from(self.injected_rotation))
    }

    /// Per-sample gyro noise standard deviation, rad/s.
    pub fn gyro_sigma(&self) -> f64 {
        self.gyro_noise_density * self.imu_rate.sqrt()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    /// Random stream dedicated to one generator.
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Key-value ground truth describing what was injected.
    pub fn truth_entries(&self) -> Vec<(String, String)> {
        let r = self.injected_rotation();
        let [w, x, y, z] = r.wxyz();
        let rv = self.injected_rotation;
        vec![
            ("seed".into(), self.seed.to_string()),
            ("duration".into(), format!("{}", self.duration)),
            ("start_time".into(), format!("{:.9}", self.start_time)),
            ("imu_rate".into(), format!("{}", self.imu_rate)),
            ("odom_rate".into(), format!("{}", self.odom_rate)),
            ("injected_offset".into(), format!("{:.9}", self.injected_offset)),
            (
                "injected_rotation_vector".into(),
                format!("{:.12} {:.12} {:.12}", rv[0], rv[1], rv[2]),
            ),
            (
                "injected_rotation_wxyz".into(),
                format!("{w:.12} {x:.12} {y:.12} {z:.12}"),
            ),
            (
                "injected_rotation_deg".into(),
                format!("{:.9}", r.angle().to_degrees()),
            ),
            ("gyro_sigma".into(), format!("{:.9}", self.gyro_sigma())),
            (
                "gyro_bias".into(),
                format!("{} {} {}", self.gyro_bias[0], self.gyro_bias[1], self.gyro_bias[2]),
            ),
            ("clock_skew".into(), format!("{:.12}", self.clock.skew())),
            ("clock_offset".into(), format!("{:.9}", self.clock.offset)),
            ("clock_min_delay".into(), format!("{:.9}", self.clock.min_delay)),
            ("clock_jitter_scale".into(), format!("{:.9}", self.clock.jitter_scale)),
        ]
    }
}

const STREAM_BURSTS: u64 = 1;
const STREAM_IMU: u64 = 2;
const STREAM_ODOM: u64 = 3;
const STREAM_CLOCK: u64 = 4;
pub(crate) const STREAM_ROOM: u64 = 5;

fn sample_times(start: f64, duration: f64, rate: f64) -> impl Iterator<Item = Timestamp> {
    let n = (duration * rate * (1.0 + 1e-12)).floor() as usize + 1;
    (0..n).map(move |k| Timestamp::from_secs(start + k as f64 / rate))
}

/// Builds the analytic trajectory for `cfg` (burst centers drawn from the seed).
pub fn analytic_trajectory(cfg: &SimConfig) -> Result<AnalyticTrajectory> {
    cfg.validate()?;
    let bursts = if cfg.motion.bursts > 0 {
        let mut rng = cfg.rng(STREAM_BURSTS);
        let u = Uniform::new(0.0, cfg.duration).map_err(|e| invalid(e.to_string()))?;
        let mut c: Vec<f64> = (0..cfg.motion.bursts).map(|_| u.sample(&mut rng)).collect();
        c.sort_by(f64::total_cmp);
        c
    } else {
        Vec::new()
    };
    Ok(AnalyticTrajectory::new(cfg.motion.clone(), cfg.start_time, bursts))
}

/// Ground-truth IMU trajectory sampled at the odometry rate, plus its
/// analytic form.
pub fn gen_trajectory(cfg: &SimConfig) -> Result<(Trajectory, AnalyticTrajectory)> {
    let analytic = analytic_trajectory(cfg)?;
    let poses = sample_times(cfg.start_time, cfg.duration, cfg.odom_rate)
        .map(|t| analytic.pose(t))
        .collect();
    Ok((Trajectory::new(poses)?, analytic))
}

/// Gyro = body rate + bias + white noise; accel = specific force.
pub fn gen_imu(cfg: &SimConfig, analytic: &AnalyticTrajectory) -> Result<Vec<ImuSample>> {
    cfg.validate()?;
    let mut rng = cfg.rng(STREAM_IMU);
    let noise = Normal::new(0.0, cfg.gyro_sigma()).map_err(|e| invalid(e.to_string()))?;
    let bias = Vec3::from(cfg.gyro_bias);
    let g = Vec3::new(0.0, 0.0, GRAVITY);
    Ok(sample_times(cfg.start_time, cfg.duration, cfg.imu_rate)
        .map(|t| {
            let s = analytic.state(t);
            let n = Vec3::new(
                noise.sample(&mut rng),
                noise.sample(&mut rng),
                noise.sample(&mut rng),
            );
            ImuSample {
                t,
                gyro: s.omega + bias + n,
                accel: s.pose.rotation.inverse().rotate(&(s.acceleration + g)),
            }
        })
        .collect())
}

/// Lidar odometry as a calibration target: orientation `R_WI·R_IL` (so the
/// recovered rotation equals the injected one), stamps shifted by
/// `−injected_offset`, optional per-pose noise.
pub fn gen_lidar_odometry(cfg: &SimConfig, analytic: &AnalyticTrajectory) -> Result<Trajectory> {
    cfg.validate()?;
    let mut rng = cfg.rng(STREAM_ODOM);
    let rot_noise = Normal::new(0.0, cfg.odom_rotation_noise).map_err(|e| invalid(e.to_string()))?;
    let pos_noise =
        Normal::new(0.0, cfg.odom_translation_noise).map_err(|e| invalid(e.to_string()))?;
    let extrinsic = cfg.injected_rotation();
    let poses = sample_times(cfg.start_time, cfg.duration, cfg.odom_rate)
        .map(|t| {
            let truth = analytic.pose(t);
            let mut rotation = if cfg.injected_rotation == [0.0; 3] {
                truth.rotation
            } else {
                truth.rotation.compose(&extrinsic)
            };
            let mut translation = truth.translation;
            if cfg.odom_rotation_noise > 0.0 {
                let e = Vec3::new(
                    rot_noise.sample(&mut rng),
                    rot_noise.sample(&mut rng),
                    rot_noise.sample(&mut rng),
                );
                rotation = rotation.compose(&so3_exp(&e));
            }
            if cfg.odom_translation_noise > 0.0 {
                translation += Vec3::new(
                    pos_noise.sample(&mut rng),
                    pos_noise.sample(&mut rng),
                    pos_noise.sample(&mut rng),
                );
            }
            Pose::new(t - cfg.injected_offset, rotation, translation)
        })
        .collect();
    Trajectory::new(poses)
}

/// Regular sensor stamps with host arrival
/// `skew·sensor + offset + min_delay + U(0, jitter_scale)`.
pub fn gen_timestamp_pairs(cfg: &SimConfig) -> Result<Vec<TimestampPair>> {
    cfg.validate()?;
    let c = &cfg.clock;
    let mut rng = cfg.rng(STREAM_CLOCK);
    let jitter = Uniform::new_inclusive(0.0, c.jitter_scale).map_err(|e| invalid(e.to_string()))?;
    Ok((0..c.count)
        .map(|k| {
            let s = cfg.start_time + k as f64 / c.sensor_rate;
            let h = c.skew() * s + c.offset + c.min_delay + jitter.sample(&mut rng);
            TimestampPair::new(s, h)
        })
        .collect())
}
