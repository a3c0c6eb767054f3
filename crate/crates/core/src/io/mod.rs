//! Readers and writers for the on-disk formats.

mod ply;
mod tum;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

pub use ply::{read_ply, write_ply, PlyData, PlyEncoding, PlyOptions};
pub use tum::{read_tum, write_tum};

use crate::clocksync::TimestampPair;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Pose, Rotation, Timestamp, Vec3};
use crate::mapping::{CameraModel, LidarPoint, LidarScan, PointCloud};
use crate::tempcal::ImuSample;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("not a number: {:?}", field.trim())))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("non-finite value {v}")))
    }
}

fn csv_records<R: Read>(reader: R, columns: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(i + 1, e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        // A leading non-numeric record is a header.
        if out.is_empty() && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() != columns {
            return Err(parse_err(line, format!("expected {columns} fields, got {}", rec.len())));
        }
        let vals = rec.iter().map(|f| parse_f64(f, line)).collect::<Result<Vec<_>>>()?;
        out.push((line, vals));
    }
    Ok(out)
}

/// `sensor_time,host_time` per line, optional header.
pub fn read_timestamp_pairs<R: Read>(reader: R) -> Result<Vec<TimestampPair>> {
    Ok(csv_records(reader, 2)?
        .into_iter()
        .map(|(_, v)| TimestampPair::new(v[0], v[1]))
        .collect())
}

pub fn write_timestamp_pairs<W: Write>(mut w: W, pairs: &[TimestampPair]) -> Result<()> {
    writeln!(w, "sensor_time,host_time")?;
    for p in pairs {
        writeln!(w, "{:.9},{:.9}", p.sensor_time.secs(), p.host_time.secs())?;
    }
    Ok(())
}

/// Smoothed host times next to their sensor times.
pub fn write_smoothed<W: Write>(mut w: W, pairs: &[TimestampPair], smoothed: &[Timestamp]) -> Result<()> {
    writeln!(w, "sensor_time,host_time,smoothed_time")?;
    for (p, s) in pairs.iter().zip(smoothed) {
        writeln!(w, "{:.9},{:.9},{:.9}", p.sensor_time.secs(), p.host_time.secs(), s.secs())?;
    }
    Ok(())
}

/// `t,gx,gy,gz,ax,ay,az` per line, optional header; rates in rad/s.
pub fn read_imu_csv<R: Read>(reader: R) -> Result<Vec<ImuSample>> {
    let recs = csv_records(reader, 7)?;
    let mut out = Vec::with_capacity(recs.len());
    for (line, v) in recs {
        let t = Timestamp::from_secs(v[0]);
        if out.last().is_some_and(|p: &ImuSample| p.t >= t) {
            return Err(parse_err(line, "imu timestamps not strictly increasing"));
        }
        out.push(ImuSample {
            t,
            gyro: Vec3::new(v[1], v[2], v[3]),
            accel: Vec3::new(v[4], v[5], v[6]),
        });
    }
    Ok(out)
}

pub fn write_imu_csv<W: Write>(mut w: W, samples: &[ImuSample]) -> Result<()> {
    writeln!(w, "t,gx,gy,gz,ax,ay,az")?;
    for s in samples {
        writeln!(
            w,
            "{:.9},{},{},{},{},{},{}",
            s.t.secs(),
            s.gyro.x,
            s.gyro.y,
            s.gyro.z,
            s.accel.x,
            s.accel.y,
            s.accel.z
        )?;
    }
    Ok(())
}

/// `key = value` lines with `#` comments, in file order.
pub fn read_key_values<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| parse_err(i + 1, format!("expected key = value, got {body:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn write_key_values<W: Write>(mut w: W, entries: &[(String, String)]) -> Result<()> {
    for (k, v) in entries {
        writeln!(w, "{k} = {v}")?;
    }
    Ok(())
}

fn lookup<'a>(entries: &'a [(String, String)], key: &str) -> Result<&'a str> {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| invalid(format!("missing key {key:?}")))
}

fn numbers(entries: &[(String, String)], key: &str, count: usize) -> Result<Vec<f64>> {
    let raw = lookup(entries, key)?;
    let vals = raw
        .split_whitespace()
        .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| invalid(format!("key {key:?}: not numeric: {raw:?}")))?;
    if vals.len() != count {
        return Err(invalid(format!("key {key:?}: expected {count} numbers, got {}", vals.len())));
    }
    Ok(vals)
}

/// Camera parameters: `fx, fy, cx, cy, width, height` and
/// `extrinsic = tx ty tz qx qy qz qw` (camera from lidar).
pub fn read_camera_params<R: BufRead>(reader: R) -> Result<CameraModel> {
    let kv = read_key_values(reader)?;
    let one = |k: &str| numbers(&kv, k, 1).map(|v| v[0]);
    let dim = |k: &str| -> Result<u32> {
        let v = one(k)?;
        if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
            Ok(v as u32)
        } else {
            Err(invalid(format!("key {k:?}: expected a positive integer, got {v}")))
        }
    };
    let e = numbers(&kv, "extrinsic", 7)?;
    let rotation = Rotation::from_wxyz(e[6], e[3], e[4], e[5])?;
    CameraModel::new(
        one("fx")?,
        one("fy")?,
        one("cx")?,
        one("cy")?,
        dim("width")?,
        dim("height")?,
        Pose::transform(rotation, Vec3::new(e[0], e[1], e[2])),
    )
}

/// Report rows `metric,length,value`; `length` is empty when not applicable.
pub fn write_metric_csv<W: Write>(w: W, rows: &[(String, Option<f64>, f64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.into());
    wtr.write_record(["metric", "length", "value"]).map_err(io)?;
    for (metric, length, value) in rows {
        let length = length.map(|l| l.to_string()).unwrap_or_default();
        wtr.write_record([metric.as_str(), length.as_str(), value.to_string().as_str()])
            .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// File name of a scan: its start time with nine fractional digits.
pub fn scan_file_name(scan_start: Timestamp) -> String {
    format!("{:.9}.ply", scan_start.secs())
}

/// Scan PLY files in `dir`, sorted by start time.
pub fn list_scan_files(dir: &Path) -> Result<Vec<(Timestamp, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("ply") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let start = stem
            .parse::<f64>()
            .ok()
            .and_then(|s| Timestamp::try_from_secs(s).ok())
            .ok_or_else(|| invalid(format!("scan file {} is not named by its start time", path.display())))?;
        out.push((start, path));
    }
    out.sort_by_key(|a| a.0);
    Ok(out)
}

/// Scan points with per-point `time` offsets from `scan_start`.
pub fn read_scan<R: BufRead>(reader: R, scan_start: Timestamp) -> Result<LidarScan> {
    let data = read_ply(reader)?;
    let time = data
        .time
        .ok_or_else(|| invalid("scan PLY has no per-point time property"))?;
    let intensity = data.cloud.intensity();
    let points = data
        .cloud
        .positions()
        .iter()
        .zip(&time)
        .enumerate()
        .map(|(i, (p, dt))| LidarPoint {
            position: *p,
            intensity: intensity.map_or(0.0, |v| v[i]),
            dt: *dt,
        })
        .collect();
    LidarScan::new(scan_start, points)
}

pub fn write_scan<W: Write>(w: W, scan: &LidarScan, encoding: PlyEncoding) -> Result<()> {
    let cloud = PointCloud::from_positions(scan.positions().copied().collect())
        .with_intensity(scan.points.iter().map(|p| p.intensity).collect())?;
    let time: Vec<f64> = scan.points.iter().map(|p| p.dt).collect();
    write_ply(
        w,
        &cloud,
        Some(&time),
        &PlyOptions {
            encoding,
            ..Default::default()
        },
    )
}

pub fn read_scan_dir(dir: &Path) -> Result<Vec<LidarScan>> {
    list_scan_files(dir)?
        .into_iter()
        .map(|(start, path)| {
            let f = BufReader::new(fs::File::open(&path)?);
            read_scan(f, start).map_err(|e| Error::Scan {
                start: start.secs(),
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn read_ply_file(path: &Path) -> Result<PlyData> {
    read_ply(BufReader::new(fs::File::open(path)?))
}

pub fn read_tum_file(path: &Path) -> Result<crate::trajectory::Trajectory> {
    read_tum(BufReader::new(fs::File::open(path)?))
}
