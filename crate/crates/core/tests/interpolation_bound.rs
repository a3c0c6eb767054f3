use phonemap::simgen::{gen_trajectory, SimConfig};
use phonemap::{interpolate_pose, Timestamp};

#[test]
fn linear_interpolation_error_is_within_the_acceleration_bound() {
    let cfg = SimConfig {
        duration: 20.0,
        ..Default::default()
    };
    let (traj, analytic) = gen_trajectory(&cfg).unwrap();
    let dt = 1.0 / cfg.odom_rate;
    let samples: Vec<Timestamp> = (0..=20_000)
        .map(|k| Timestamp::from_secs(cfg.start_time + k as f64 * 1e-3))
        .collect();
    let max_accel = samples
        .iter()
        .map(|t| analytic.state(*t).acceleration.norm())
        .fold(0.0, f64::max);
    let bound = dt * dt * max_accel / 8.0;
    let worst = samples
        .iter()
        .map(|t| (interpolate_pose(&traj, *t).unwrap().translation - analytic.pose(*t).translation).norm())
        .fold(0.0, f64::max);
    assert!(worst > 0.0);
    assert!(worst < bound, "{worst} vs {bound}");
}
