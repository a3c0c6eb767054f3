mod common;

use nalgebra::Vector3;
use phonemap::simgen::{gen_imu, gen_lidar_odometry, gen_trajectory, SimConfig};
use phonemap::tempcal::{calibrate_lidar_imu, estimate_rotation_tls, DEFAULT_PERIOD, DEFAULT_WINDOW};
use phonemap::{Error, Rotation, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(cfg: &SimConfig) -> (Vec<phonemap::tempcal::ImuSample>, phonemap::Trajectory) {
    let (_, analytic) = gen_trajectory(cfg).unwrap();
    (gen_imu(cfg, &analytic).unwrap(), gen_lidar_odometry(cfg, &analytic).unwrap())
}

#[test]
fn recovers_injected_offset_and_rotation() {
    let cfg = SimConfig {
        injected_offset: 0.012,
        injected_rotation: [0.0, 20f64.to_radians(), 0.0],
        odom_rotation_noise: 0.001,
        odom_translation_noise: 0.002,
        seed: 11,
        ..Default::default()
    };
    let (imu, odom) = dataset(&cfg);
    let (offset, rotation) = calibrate_lidar_imu(&imu, &odom, DEFAULT_WINDOW, DEFAULT_PERIOD).unwrap();
    assert!((offset.t_d - 0.012).abs() < 1e-3, "{}", offset.t_d);
    assert!(offset.peak_correlation > 0.9);
    let err = rotation.rotation.angle_to(&cfg.injected_rotation()).to_degrees();
    assert!(err < 0.2, "{err}");
}

#[test]
fn offset_agrees_with_exhaustive_correlation() {
    for (seed, injected) in [(1u64, -0.0137), (2, 0.0046)] {
        let cfg = SimConfig {
            injected_offset: injected,
            seed,
            ..Default::default()
        };
        let (imu, odom) = dataset(&cfg);
        let (offset, _) = calibrate_lidar_imu(&imu, &odom, DEFAULT_WINDOW, DEFAULT_PERIOD).unwrap();
        let oracle = common::correlation_oracle_1khz(
            &imu.iter().map(|s| (s.t.secs(), s.gyro)).collect::<Vec<_>>(),
            &odom.poses().iter().map(|p| (p.t.secs(), *p.rotation.quaternion())).collect::<Vec<_>>(),
            DEFAULT_WINDOW,
        );
        assert!((offset.t_d - oracle).abs() < 5e-4, "{} vs {oracle}", offset.t_d);
    }
}

#[test]
fn still_sensor_is_rejected_as_algorithmic() {
    let cfg = SimConfig {
        motion: phonemap::simgen::MotionConfig::stationary(),
        ..Default::default()
    };
    let (imu, odom) = dataset(&cfg);
    let err = calibrate_lidar_imu(&imu, &odom, DEFAULT_WINDOW, DEFAULT_PERIOD).unwrap_err();
    assert!(err.is_algorithmic(), "{err}");
}

#[test]
fn short_recording_is_rejected() {
    let cfg = SimConfig { duration: 20.0, ..Default::default() };
    let (imu, odom) = dataset(&cfg);
    let err = calibrate_lidar_imu(&imu, &odom, DEFAULT_WINDOW, DEFAULT_PERIOD).unwrap_err();
    assert!(matches!(err.root(), Error::NoOverlap(_)), "{err}");
}

#[test]
fn truncation_matches_ransac_oracle() {
    let truth = Rotation::from_axis_angle(&Vec3::new(0.3, -1.0, 0.4), 30f64.to_radians());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pairs = Vec::new();
    let mut gross = Vec::new();
    for k in 0..500 {
        let w = Vec3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let noise = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.003;
        let outlier = k % 10 == 3;
        let imu = if outlier {
            Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        } else {
            truth.rotate(&w) + noise
        };
        pairs.push((imu, w));
        gross.push(outlier);
    }
    let est = estimate_rotation_tls(&pairs).unwrap();
    let (oracle, oracle_inliers) = common::ransac_rotation(
        &pairs.iter().map(|(a, b)| (Vector3::from(*a), Vector3::from(*b))).collect::<Vec<_>>(),
        0.05,
        2000,
        9,
    );
    let oracle = Rotation::from_matrix(&oracle);
    assert!(est.rotation.angle_to(&truth).to_degrees() < 0.1);
    assert!(est.rotation.angle_to(&oracle).to_degrees() < 0.05);
    for (k, g) in gross.iter().enumerate() {
        if *g && (pairs[k].0 - truth.rotate(&pairs[k].1)).norm() > 0.1 {
            assert!(!est.inliers[k], "gross outlier {k} kept");
            assert!(!oracle_inliers[k]);
        }
    }
}
