use std::fs;
use std::path::{Path, PathBuf};

use phonemap::clocksync::{fit_clock_batch, fit_clock_causal, smooth_timestamps};
use phonemap::geometry::so3_log;
use phonemap::io::{
    read_camera_params, read_imu_csv, read_ply_file, read_scan_dir, read_timestamp_pairs, read_tum_file,
    scan_file_name, write_imu_csv, write_key_values, write_metric_csv, write_ply, write_scan, write_smoothed,
    write_timestamp_pairs, write_tum, PlyEncoding, PlyOptions,
};
use phonemap::mapping::{
    aggregate_map, aggregate_map_raw, cloud_to_cloud_distance, icp_refine, points_for_bytes, project_to_image,
    random_downsample, undistort_scan, C2cResult, IcpParams, IcpStop, PointCloud,
};
use phonemap::simgen::{gen_imu, gen_lidar_odometry, gen_room_scans, gen_timestamp_pairs, gen_trajectory, SimConfig};
use phonemap::tempcal::calibrate_lidar_imu;
use phonemap::trajeval::{associate_with_offset, ate, pool_rpe, rpe, umeyama_align, Alignment, RpeResult};
use phonemap::{Pose, Trajectory};

use crate::report::{write_atomic, RunReport};
use crate::{AssocArgs, Command, Failure, ReportArgs};

type Outcome = Result<RunReport, Failure>;

pub fn run(cmd: Command, out: &ReportArgs) -> Result<(), Failure> {
    let report = match cmd {
        Command::Sync { pairs, out, causal, warmup } => sync(&pairs, out.as_deref(), causal, warmup),
        Command::Calib { imu, odom, window, period, out } => calib(&imu, &odom, window, period, out.as_deref()),
        Command::Align { est, reference, assoc, scale, out } => align(&est, &reference, assoc, scale, out.as_deref()),
        Command::Ate { est, reference, assoc, no_align } => ate_cmd(&est, &reference, assoc, no_align),
        Command::Rpe { trajectories, lengths, max_dt } => rpe_cmd(&trajectories, &lengths, max_dt),
        Command::Undistort { scans, traj, out, ascii } => undistort(&scans, &traj, &out, encoding(ascii)),
        Command::Aggregate { scans, traj, out, raw, ascii } => aggregate(&scans, &traj, &out, raw, encoding(ascii)),
        Command::Downsample { input, out, points, bytes, seed, ascii } => {
            downsample(&input, &out, points, bytes, seed, encoding(ascii))
        }
        Command::C2c { compared, reference, radius, max_dist, both, out } => {
            c2c(&compared, &reference, radius, max_dist, both, out.as_deref())
        }
        Command::Icp { compared, reference, max_iterations, tolerance, max_dist, normal_radius, out } => {
            let params = IcpParams {
                max_iterations,
                tolerance,
                max_correspondence_distance: max_dist,
                normal_radius,
            };
            icp(&compared, &reference, &params, out.as_deref())
        }
        Command::Project { cloud, camera, out } => project(&cloud, &camera, &out),
        Command::Simgen { config, out, seed, no_scans } => simgen(config.as_deref(), &out, seed, no_scans),
    }?;
    let text = report.render();
    print!("{text}");
    if let Some(path) = &out.report {
        write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))?;
    }
    if let Some(path) = &out.metrics_csv {
        let rows = report.metric_rows();
        write_atomic(path, |w| write_metric_csv(w, &rows))?;
    }
    Ok(())
}

fn encoding(ascii: bool) -> PlyEncoding {
    if ascii {
        PlyEncoding::Ascii
    } else {
        PlyEncoding::BinaryLittleEndian
    }
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must be a positive number, got {v}")))
    }
}

fn distinct_output(out: &Path, inputs: &[&Path]) -> Result<(), Failure> {
    let canon = |p: &Path| fs::canonicalize(p).ok();
    let o = canon(out);
    if o.is_some() && inputs.iter().any(|i| canon(i) == o) {
        return Err(Failure::Usage(format!("output {} would overwrite an input", out.display())));
    }
    Ok(())
}

fn tum(path: &Path) -> Result<Trajectory, Failure> {
    read_tum_file(path).map_err(|e| Failure::in_file(path, e))
}

fn cloud(path: &Path) -> Result<PointCloud, Failure> {
    read_ply_file(path).map(|d| d.cloud).map_err(|e| Failure::in_file(path, e))
}

fn open(path: &Path) -> Result<std::io::BufReader<fs::File>, Failure> {
    fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn pose_metrics(r: &mut RunReport, prefix: &str, pose: &Pose) {
    let t = pose.translation;
    let [qw, qx, qy, qz] = pose.rotation.wxyz();
    r.metric(&format!("{prefix}tx"), t.x, "m");
    r.metric(&format!("{prefix}ty"), t.y, "m");
    r.metric(&format!("{prefix}tz"), t.z, "m");
    r.metric(&format!("{prefix}qw"), qw, "");
    r.metric(&format!("{prefix}qx"), qx, "");
    r.metric(&format!("{prefix}qy"), qy, "");
    r.metric(&format!("{prefix}qz"), qz, "");
    r.metric(&format!("{prefix}angle"), pose.rotation.angle().to_degrees(), "deg");
}

fn sync(path: &Path, out: Option<&Path>, causal: bool, warmup: usize) -> Outcome {
    let mut r = RunReport::new("sync");
    r.input("pairs", path)?;
    r.param("causal", causal);
    if causal {
        r.param("warmup", warmup);
    }
    let pairs = read_timestamp_pairs(open(path)?).map_err(|e| Failure::in_file(path, e))?;
    let model = fit_clock_batch(&pairs)?;
    let smoothed = if causal {
        let stream = fit_clock_causal(pairs.clone(), warmup).map_err(|e| Failure::Usage(e.to_string()))?;
        let mut out = Vec::with_capacity(pairs.len());
        for step in stream {
            let (pair, m) = step?;
            out.push(m.smoothed(pair.sensor_time));
        }
        out
    } else {
        smooth_timestamps(&pairs, &model)
    };
    r.metric("pairs", pairs.len() as f64, "");
    r.metric("skew", model.skew(), "s/s");
    r.metric("skew_ppm", (model.skew() - 1.0) * 1e6, "ppm");
    r.metric("offset", model.offset(), "s");
    r.metric("support_count", model.support_count() as f64, "");
    r.metric("mean_excess", model.mean_excess(), "s");
    r.warnings(model.warnings());
    if let Some(o) = out {
        distinct_output(o, &[path])?;
        write_atomic(o, |w| write_smoothed(w, &pairs, &smoothed))?;
    }
    Ok(r)
}

fn calib(imu_path: &Path, odom_path: &Path, window: f64, period: f64, out: Option<&Path>) -> Outcome {
    positive("window", window)?;
    positive("period", period)?;
    let mut r = RunReport::new("calib");
    r.input("imu", imu_path)?;
    r.input("odom", odom_path)?;
    r.param("window", window);
    r.param("period", period);
    let imu = read_imu_csv(open(imu_path)?).map_err(|e| Failure::in_file(imu_path, e))?;
    let odom = tum(odom_path)?;
    let (offset, rot) = calibrate_lidar_imu(&imu, &odom, window, period)?;
    r.metric("time_offset", offset.t_d, "s");
    r.metric("time_offset_ms", offset.t_d * 1e3, "ms");
    r.metric("peak_correlation", offset.peak_correlation, "");
    let [qw, qx, qy, qz] = rot.rotation.wxyz();
    let rv = so3_log(&rot.rotation);
    for (k, v) in [("qw", qw), ("qx", qx), ("qy", qy), ("qz", qz)] {
        r.metric(&format!("rotation_{k}"), v, "");
    }
    r.metric("rotation_angle", rot.rotation.angle().to_degrees(), "deg");
    r.metric("inliers", rot.inlier_count as f64, "");
    r.metric("inlier_fraction", rot.inlier_count as f64 / rot.inliers.len().max(1) as f64, "");
    r.metric("rms_residual", rot.rms_residual, "rad/s");
    r.metric("truncation_rounds", rot.truncation_rounds as f64, "");
    if (offset.t_d.abs() - window).abs() < period {
        r.warn("time offset is at the edge of the search window");
    }
    if let Some(o) = out {
        let kv = vec![
            ("time_offset".to_string(), format!("{:.9}", offset.t_d)),
            ("rotation_wxyz".to_string(), format!("{qw:.12} {qx:.12} {qy:.12} {qz:.12}")),
            ("rotation_vector".to_string(), format!("{:.12} {:.12} {:.12}", rv.x, rv.y, rv.z)),
        ];
        distinct_output(o, &[imu_path, odom_path])?;
        write_atomic(o, |w| write_key_values(w, &kv))?;
    }
    Ok(r)
}

fn assoc_params(r: &mut RunReport, a: AssocArgs) -> Result<(), Failure> {
    positive("max-dt", a.max_dt)?;
    if !a.offset.is_finite() {
        return Err(Failure::Usage("--offset must be finite".into()));
    }
    r.param("max_dt", a.max_dt);
    r.param("offset", a.offset);
    Ok(())
}

fn align(est_path: &Path, ref_path: &Path, a: AssocArgs, scale: bool, out: Option<&Path>) -> Outcome {
    let mut r = RunReport::new("align");
    r.input("est", est_path)?;
    r.input("ref", ref_path)?;
    assoc_params(&mut r, a)?;
    r.param("scale", scale);
    let est = tum(est_path)?;
    let matched = associate_with_offset(&est, &tum(ref_path)?, a.offset, a.max_dt)?;
    let alignment = umeyama_align(&matched, scale)?;
    r.metric("matches", matched.len() as f64, "");
    pose_metrics(&mut r, "", &alignment.transform);
    r.metric("scale", alignment.scale, "");
    r.warnings(alignment.warnings.clone());
    if let Some(o) = out {
        let poses = est
            .poses()
            .iter()
            .map(|p| alignment.apply_pose(p).with_time(p.t + a.offset))
            .collect();
        let aligned = Trajectory::new(poses)?;
        distinct_output(o, &[est_path, ref_path])?;
        write_atomic(o, |w| write_tum(w, &aligned))?;
    }
    Ok(r)
}

fn ate_cmd(est_path: &Path, ref_path: &Path, a: AssocArgs, no_align: bool) -> Outcome {
    let mut r = RunReport::new("ate");
    r.input("est", est_path)?;
    r.input("ref", ref_path)?;
    assoc_params(&mut r, a)?;
    r.param("align", !no_align);
    let matched = associate_with_offset(&tum(est_path)?, &tum(ref_path)?, a.offset, a.max_dt)?;
    let alignment = if no_align {
        Alignment::identity()
    } else {
        umeyama_align(&matched, false)?
    };
    let result = ate(&matched, &alignment)?;
    r.metric("matches", matched.len() as f64, "");
    r.metric("rmse_translation", result.rmse_translation, "m");
    r.metric("rmse_rotation", result.rmse_rotation, "deg");
    r.warnings(alignment.warnings);
    Ok(r)
}

fn rpe_metrics(r: &mut RunReport, prefix: &str, res: &RpeResult) {
    r.metric(&format!("{prefix}translation"), res.translation_percent, "%");
    r.metric(&format!("{prefix}rotation"), res.rotation_deg_per_m, "deg/m");
    r.metric(&format!("{prefix}samples"), res.sample_count() as f64, "");
    for l in &res.per_length {
        let m = l.mean();
        r.length_metric(&format!("{prefix}translation"), l.length, m.translation_percent, "%");
        r.length_metric(&format!("{prefix}rotation"), l.length, m.rotation_deg_per_m, "deg/m");
    }
}

fn rpe_cmd(paths: &[PathBuf], lengths: &[f64], max_dt: f64) -> Outcome {
    if !paths.len().is_multiple_of(2) {
        return Err(Failure::Usage("rpe takes EST REF pairs".into()));
    }
    for l in lengths {
        positive("lengths", *l)?;
    }
    positive("max-dt", max_dt)?;
    let mut r = RunReport::new("rpe");
    for (k, pair) in paths.chunks(2).enumerate() {
        r.input(&format!("est{}", k + 1), &pair[0])?;
        r.input(&format!("ref{}", k + 1), &pair[1])?;
    }
    r.param("lengths", lengths.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(","));
    r.param("max_dt", max_dt);
    let mut results = Vec::new();
    for pair in paths.chunks(2) {
        let res = rpe(&tum(&pair[0])?, &tum(&pair[1])?, lengths, max_dt)
            .map_err(|e| Failure::in_file(&pair[0], e))?;
        for l in &res.skipped_lengths {
            r.warn(format!("{}: path too short for {l} m segments", pair[0].display()));
        }
        results.push(res);
    }
    let pooled = pool_rpe(&results).expect("at least one sequence");
    rpe_metrics(&mut r, "", &pooled);
    if results.len() > 1 {
        let n = results.len() as f64;
        r.metric("sequence_mean.translation", results.iter().map(|x| x.translation_percent).sum::<f64>() / n, "%");
        r.metric("sequence_mean.rotation", results.iter().map(|x| x.rotation_deg_per_m).sum::<f64>() / n, "deg/m");
        for (k, res) in results.iter().enumerate() {
            rpe_metrics(&mut r, &format!("seq{}.", k + 1), res);
        }
    }
    Ok(r)
}

fn scans_in(dir: &Path) -> Result<Vec<phonemap::mapping::LidarScan>, Failure> {
    let scans = read_scan_dir(dir).map_err(|e| Failure::in_file(dir, e))?;
    if scans.is_empty() {
        return Err(Failure::Data(format!("{}: no scan files", dir.display())));
    }
    Ok(scans)
}

fn undistort(dir: &Path, traj_path: &Path, out: &Path, enc: PlyEncoding) -> Outcome {
    let mut r = RunReport::new("undistort");
    r.input("scans", dir)?;
    r.input("traj", traj_path)?;
    r.param("out", out.display());
    distinct_output(out, &[dir])?;
    let traj = tum(traj_path)?;
    let scans = scans_in(dir)?;
    let fixed = scans
        .iter()
        .map(|s| undistort_scan(s, &traj))
        .collect::<phonemap::Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    for s in &fixed {
        write_atomic(&out.join(scan_file_name(s.scan_start)), |w| write_scan(w, s, enc))?;
    }
    r.metric("scans", fixed.len() as f64, "");
    r.metric("points", fixed.iter().map(|s| s.points.len()).sum::<usize>() as f64, "");
    Ok(r)
}

fn aggregate(dir: &Path, traj_path: &Path, out: &Path, raw: bool, enc: PlyEncoding) -> Outcome {
    let mut r = RunReport::new("aggregate");
    r.input("scans", dir)?;
    r.input("traj", traj_path)?;
    r.param("undistort", !raw);
    distinct_output(out, &[traj_path])?;
    let traj = tum(traj_path)?;
    let scans = scans_in(dir)?;
    let map = if raw {
        aggregate_map_raw(&scans, &traj)?
    } else {
        aggregate_map(&scans, &traj)?
    };
    let opts = PlyOptions { encoding: enc, ..Default::default() };
    write_atomic(out, |w| write_ply(w, &map, None, &opts))?;
    r.metric("scans", scans.len() as f64, "");
    r.metric("points", map.len() as f64, "");
    Ok(r)
}

fn downsample(input: &Path, out: &Path, points: Option<usize>, bytes: u64, seed: u64, enc: PlyEncoding) -> Outcome {
    let target = match points {
        Some(0) => return Err(Failure::Usage("--points must be at least 1".into())),
        Some(n) => n,
        None if bytes == 0 => return Err(Failure::Usage("--bytes must be positive".into())),
        None => points_for_bytes(bytes),
    };
    let mut r = RunReport::new("downsample");
    r.input("cloud", input)?;
    r.param("target_points", target);
    r.param("seed", seed);
    distinct_output(out, &[input])?;
    let c = cloud(input)?;
    let sampled = random_downsample(&c, target, seed);
    let opts = PlyOptions {
        encoding: enc,
        double_coordinates: false,
    };
    write_atomic(out, |w| write_ply(w, &sampled, None, &opts))?;
    r.metric("input_points", c.len() as f64, "");
    r.metric("output_points", sampled.len() as f64, "");
    Ok(r)
}

fn c2c_metrics(r: &mut RunReport, prefix: &str, res: &C2cResult) {
    r.metric(&format!("{prefix}mean_distance"), res.mean, "m");
    r.metric(&format!("{prefix}included"), res.included_count as f64, "");
    r.metric(&format!("{prefix}excluded"), res.excluded_count as f64, "");
}

fn c2c(compared: &Path, reference: &Path, radius: f64, max_dist: f64, both: bool, out: Option<&Path>) -> Outcome {
    positive("radius", radius)?;
    positive("max-dist", max_dist)?;
    let mut r = RunReport::new("c2c");
    r.input("compared", compared)?;
    r.input("reference", reference)?;
    r.param("radius", radius);
    r.param("max_dist", max_dist);
    r.param("direction", if both { "both" } else { "compared_to_reference" });
    let (a, b) = (cloud(compared)?, cloud(reference)?);
    let res = cloud_to_cloud_distance(&a, &b, radius, max_dist)?;
    c2c_metrics(&mut r, "", &res);
    if both {
        let rev = cloud_to_cloud_distance(&b, &a, radius, max_dist)?;
        c2c_metrics(&mut r, "reverse.", &rev);
    }
    if let Some(o) = out {
        distinct_output(o, &[compared, reference])?;
        write_atomic(o, |w| {
            writeln!(w, "index,distance")?;
            for (i, d) in res.distances.iter().enumerate() {
                match d {
                    Some(d) => writeln!(w, "{i},{d:.9}")?,
                    None => writeln!(w, "{i},")?,
                }
            }
            Ok(())
        })?;
    }
    Ok(r)
}

fn icp(compared: &Path, reference: &Path, params: &IcpParams, out: Option<&Path>) -> Outcome {
    positive("max-dist", params.max_correspondence_distance)?;
    positive("normal-radius", params.normal_radius)?;
    if !(params.tolerance >= 0.0) {
        return Err(Failure::Usage("--tolerance must be nonnegative".into()));
    }
    let mut r = RunReport::new("icp");
    r.input("compared", compared)?;
    r.input("reference", reference)?;
    r.param("max_iterations", params.max_iterations);
    r.param("tolerance", params.tolerance);
    r.param("max_dist", params.max_correspondence_distance);
    r.param("normal_radius", params.normal_radius);
    let a = cloud(compared)?;
    let res = icp_refine(&a, &cloud(reference)?, params)?;
    pose_metrics(&mut r, "", &res.transform);
    r.metric("iterations", res.iterations as f64, "");
    r.metric("converged", if res.converged() { 1.0 } else { 0.0 }, "");
    r.metric("initial_overlap", res.initial_overlap, "");
    r.metric("initial_residual", res.residuals[0], "m");
    r.metric("final_residual", *res.residuals.last().expect("nonempty"), "m");
    r.metric("unconstrained_directions", res.unconstrained.len() as f64, "");
    if res.stop == IcpStop::IterationLimit {
        r.warn("iteration limit reached before convergence; last iterate returned");
    }
    for d in &res.unconstrained {
        r.warn(format!(
            "unconstrained direction (wx wy wz tx ty tz) = {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
            d[0], d[1], d[2], d[3], d[4], d[5]
        ));
    }
    if let Some(o) = out {
        distinct_output(o, &[compared, reference])?;
        let moved = a.transformed(&res.transform);
        write_atomic(o, |w| write_ply(w, &moved, None, &PlyOptions::default()))?;
    }
    Ok(r)
}

fn project(cloud_path: &Path, camera: &Path, out: &Path) -> Outcome {
    let mut r = RunReport::new("project");
    r.input("cloud", cloud_path)?;
    r.input("camera", camera)?;
    distinct_output(out, &[cloud_path, camera])?;
    let cam = read_camera_params(open(camera)?).map_err(|e| Failure::in_file(camera, e))?;
    let c = cloud(cloud_path)?;
    let proj = project_to_image(&c, &cam);
    write_atomic(out, |w| {
        writeln!(w, "u,v,depth,index")?;
        for p in &proj {
            writeln!(w, "{:.6},{:.6},{:.6},{}", p.u, p.v, p.depth, p.index)?;
        }
        Ok(())
    })?;
    r.metric("points", c.len() as f64, "");
    r.metric("projected", proj.len() as f64, "");
    Ok(r)
}

fn simgen(config: Option<&Path>, out: &Path, seed: Option<u64>, no_scans: bool) -> Outcome {
    let mut r = RunReport::new("simgen");
    let mut cfg = match config {
        Some(path) => {
            r.input("config", path)?;
            let text = fs::read_to_string(path)?;
            toml::from_str::<SimConfig>(&text)
                .map_err(|e| Failure::Usage(format!("{}: {}", path.display(), e.message())))?
        }
        None => SimConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    r.param("seed", cfg.seed);
    r.param("scans", !no_scans);
    fs::create_dir_all(out)?;

    let (truth, analytic) = gen_trajectory(&cfg)?;
    let imu = gen_imu(&cfg, &analytic)?;
    let odom = gen_lidar_odometry(&cfg, &analytic)?;
    let pairs = gen_timestamp_pairs(&cfg)?;
    write_atomic(&out.join("imu.csv"), |w| write_imu_csv(w, &imu))?;
    write_atomic(&out.join("odom.tum"), |w| write_tum(w, &odom))?;
    write_atomic(&out.join("groundtruth.tum"), |w| write_tum(w, &truth))?;
    write_atomic(&out.join("pairs.csv"), |w| write_timestamp_pairs(w, &pairs))?;
    write_atomic(&out.join("truth.txt"), |w| write_key_values(w, &cfg.truth_entries()))?;
    r.metric("imu_samples", imu.len() as f64, "");
    r.metric("odom_poses", odom.len() as f64, "");
    r.metric("timestamp_pairs", pairs.len() as f64, "");
    if !no_scans {
        let room = gen_room_scans(&cfg, &analytic)?;
        let dir = out.join("scans");
        fs::create_dir_all(&dir)?;
        for s in &room.scans {
            write_atomic(&dir.join(scan_file_name(s.scan_start)), |w| {
                write_scan(w, s, PlyEncoding::BinaryLittleEndian)
            })?;
        }
        r.metric("scans", room.scans.len() as f64, "");
        r.metric("scan_points", room.scans.iter().map(|s| s.points.len()).sum::<usize>() as f64, "");
    }
    r.metric("injected_offset", cfg.injected_offset, "s");
    r.metric("injected_rotation", cfg.injected_rotation().angle().to_degrees(), "deg");
    Ok(r)
}
