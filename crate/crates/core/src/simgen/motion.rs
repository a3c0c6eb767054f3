use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Rotation, Timestamp, Vec3};

/// Sinusoidal motion with optional ramps and Gaussian excitation bursts.
///
/// Orientation is `Rz(yaw)·Ry(pitch)·Rx(roll)`, each angle being
/// `rate·τ + amplitude·sin(2π·f·τ + phase)·envelope(τ)` with `τ = t − start`.
/// Position is `origin + velocity·τ + amplitude·sin(2π·f·τ + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Roll, pitch, yaw amplitudes, rad.
    pub angle_amplitude: [f64; 3],
    pub angle_frequency: [f64; 3],
    pub angle_phase: [f64; 3],
    /// Constant angle rates, rad/s.
    pub angle_rate: [f64; 3],
    /// Position amplitudes, m.
    pub position_amplitude: [f64; 3],
    pub position_frequency: [f64; 3],
    pub position_phase: [f64; 3],
    pub velocity: [f64; 3],
    pub origin: [f64; 3],
    /// Number of excitation bursts; 0 keeps the angle envelope at 1.
    pub bursts: usize,
    /// Burst standard deviation, s.
    pub burst_width: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            angle_amplitude: [0.35, 0.3, 0.5],
            angle_frequency: [0.9, 1.3, 0.7],
            angle_phase: [0.0, 1.0, 2.0],
            angle_rate: [0.0; 3],
            position_amplitude: [0.3, 0.2, 0.1],
            position_frequency: [0.2, 0.3, 0.5],
            position_phase: [0.0, 0.5, 1.0],
            velocity: [0.0; 3],
            origin: [0.0; 3],
            bursts: 20,
            burst_width: 0.6,
        }
    }
}

impl MotionConfig {
    /// Everything zero: a constant identity pose at the origin.
    pub fn stationary() -> Self {
        MotionConfig {
            angle_amplitude: [0.0; 3],
            angle_rate: [0.0; 3],
            position_amplitude: [0.0; 3],
            velocity: [0.0; 3],
            bursts: 0,
            ..Default::default()
        }
    }
}

/// Exact kinematic state at one instant.
#[derive(Debug, Clone, Copy)]
pub struct KinematicState {
    pub pose: Pose,
    /// Body-frame angular velocity, rad/s.
    pub omega: Vec3,
    /// World-frame velocity, m/s.
    pub velocity: Vec3,
    /// World-frame acceleration, m/s².
    pub acceleration: Vec3,
}

/// Closed-form trajectory; [`AnalyticTrajectory::state`] is exact.
#[derive(Debug, Clone)]
pub struct AnalyticTrajectory {
    cfg: MotionConfig,
    start: f64,
    bursts: Vec<f64>,
}

impl AnalyticTrajectory {
    pub(crate) fn new(cfg: MotionConfig, start: f64, bursts: Vec<f64>) -> Self {
        AnalyticTrajectory { cfg, start, bursts }
    }

    pub fn config(&self) -> &MotionConfig {
        &self.cfg
    }

    pub fn burst_centers(&self) -> &[f64] {
        &self.bursts
    }

    /// Envelope and its derivative at relative time `tau`.
    fn envelope(&self, tau: f64) -> (f64, f64) {
        if self.cfg.bursts == 0 {
            return (1.0, 0.0);
        }
        let w2 = self.cfg.burst_width * self.cfg.burst_width;
        self.bursts.iter().fold((0.0, 0.0), |(e, de), c| {
            let d = tau - c;
            let g = (-0.5 * d * d / w2).exp();
            (e + g, de - g * d / w2)
        })
    }

    /// Euler angles (roll, pitch, yaw) and their rates.
    fn angles(&self, tau: f64) -> ([f64; 3], [f64; 3]) {
        let (env, denv) = self.envelope(tau);
        let c = &self.cfg;
        let mut a = [0.0; 3];
        let mut da = [0.0; 3];
        for k in 0..3 {
            let w = TAU * c.angle_frequency[k];
            let arg = w * tau + c.angle_phase[k];
            let amp = c.angle_amplitude[k];
            a[k] = c.angle_rate[k] * tau + amp * arg.sin() * env;
            da[k] = c.angle_rate[k] + amp * (w * arg.cos() * env + arg.sin() * denv);
        }
        (a, da)
    }

    pub fn state(&self, t: Timestamp) -> KinematicState {
        let tau = t.secs() - self.start;
        let ([roll, pitch, yaw], [droll, dpitch, dyaw]) = self.angles(tau);
        let rotation = Rotation::from_axis_angle(&Vec3::z(), yaw)
            .compose(&Rotation::from_axis_angle(&Vec3::y(), pitch))
            .compose(&Rotation::from_axis_angle(&Vec3::x(), roll));
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let omega = Vec3::new(
            droll - dyaw * sp,
            dpitch * cr + dyaw * sr * cp,
            -dpitch * sr + dyaw * cr * cp,
        );

        let c = &self.cfg;
        let mut p = Vec3::zeros();
        let mut v = Vec3::zeros();
        let mut acc = Vec3::zeros();
        for k in 0..3 {
            let w = TAU * c.position_frequency[k];
            let arg = w * tau + c.position_phase[k];
            let amp = c.position_amplitude[k];
            p[k] = c.origin[k] + c.velocity[k] * tau + amp * arg.sin();
            v[k] = c.velocity[k] + amp * w * arg.cos();
            acc[k] = -amp * w * w * arg.sin();
        }
        KinematicState {
            pose: Pose::new(t, rotation, p),
            omega,
            velocity: v,
            acceleration: acc,
        }
    }

    pub fn pose(&self, t: Timestamp) -> Pose {
        self.state(t).pose
    }
}
