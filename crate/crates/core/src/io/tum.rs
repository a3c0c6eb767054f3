use std::io::{BufRead, Write};

use super::{parse_err, parse_f64};
use crate::error::Result;
use crate::geometry::{Pose, Rotation, Timestamp, Vec3};
use crate::trajectory::Trajectory;

/// `t tx ty tz qx qy qz qw` per line; `#` starts a comment.
pub fn read_tum<R: BufRead>(reader: R) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 8 {
            return Err(parse_err(i + 1, format!("expected 8 fields, got {}", f.len())));
        }
        let v = f.iter().map(|s| parse_f64(s, i + 1)).collect::<Result<Vec<_>>>()?;
        let rotation = Rotation::from_wxyz(v[7], v[4], v[5], v[6]).map_err(|e| parse_err(i + 1, e.to_string()))?;
        poses.push(Pose::new(Timestamp::from_secs(v[0]), rotation, Vec3::new(v[1], v[2], v[3])));
    }
    Trajectory::new(poses)
}

pub fn write_tum<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    for p in traj.poses() {
        let [qw, qx, qy, qz] = p.rotation.wxyz();
        let t = p.translation;
        writeln!(
            w,
            "{:.9} {} {} {} {} {} {} {}",
            p.t.secs(),
            t.x,
            t.y,
            t.z,
            qx,
            qy,
            qz,
            qw
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::geometry::so3_exp;

    #[test]
    fn round_trip() {
        let traj = Trajectory::new(
            (0..20)
                .map(|i| {
                    let t = 1_700_000_000.0 + i as f64 * 0.1;
                    Pose::new(Timestamp::from_secs(t), so3_exp(&Vec3::new(0.1, -0.2, 0.03 * i as f64)), Vec3::new(i as f64, 1e-7, -3.25))
                })
                .collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_tum(&mut buf, &traj).unwrap();
        let back = read_tum(&buf[..]).unwrap();
        for (a, b) in traj.poses().iter().zip(back.poses()) {
            assert!((a.t - b.t).abs() < 1e-9);
            assert_eq!(a.translation, b.translation);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-12);
        }
    }

    #[test]
    fn comments_and_errors() {
        let t = read_tum("# header\n\n0 1 2 3 0 0 0 1 # trailing\n1 1 2 3 0 0 0 1\n".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(matches!(read_tum("0 1 2 3 0 0 0\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_tum("0 1 2 3 0 0 0 0\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_tum("1 0 0 0 0 0 0 1\n0 0 0 0 0 0 0 1\n".as_bytes()), Err(Error::Ordering { .. })));
        assert!(read_tum("".as_bytes()).is_err());
    }
}
