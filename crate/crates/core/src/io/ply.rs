use std::io::{BufRead, Write};

use super::parse_err;
use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;
use crate::mapping::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlyOptions {
    pub encoding: PlyEncoding,
    /// Store coordinates as float64 instead of float32.
    pub double_coordinates: bool,
}

impl Default for PlyOptions {
    fn default() -> Self {
        PlyOptions {
            encoding: PlyEncoding::BinaryLittleEndian,
            double_coordinates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyData {
    pub cloud: PointCloud,
    /// Per-point `time` property, s.
    pub time: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Scalar> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

struct Header {
    encoding: PlyEncoding,
    vertex_count: usize,
    properties: Vec<(String, Scalar)>,
    lines: usize,
}

fn read_header<R: BufRead>(reader: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut lines = 0;
    let mut next = |line: &mut String, lines: &mut usize| -> Result<bool> {
        line.clear();
        *lines += 1;
        Ok(reader.read_line(line)? > 0)
    };
    if !next(&mut line, &mut lines)? || line.trim_end() != "ply" {
        return Err(parse_err(1, "missing ply magic"));
    }
    let mut encoding = None;
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    let mut seen_other = false;
    loop {
        if !next(&mut line, &mut lines)? {
            return Err(parse_err(lines, "header has no end_header"));
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", fmt, _] => {
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(parse_err(lines, format!("unsupported format {other}"))),
                })
            }
            ["element", name, count] => {
                let count: usize = count
                    .parse()
                    .map_err(|_| parse_err(lines, format!("bad element count {count}")))?;
                in_vertex = *name == "vertex";
                if in_vertex {
                    if seen_other {
                        return Err(parse_err(lines, "vertex element must come first"));
                    }
                    vertex_count = Some(count);
                } else {
                    seen_other = true;
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(parse_err(lines, "list properties on vertices are not supported"))
            }
            ["property", ty, name] => {
                if in_vertex {
                    let s = Scalar::parse(ty).ok_or_else(|| parse_err(lines, format!("unknown type {ty}")))?;
                    properties.push((name.to_string(), s));
                }
            }
            ["property", ..] if !in_vertex => {}
            _ => return Err(parse_err(lines, format!("unexpected header line {:?}", line.trim_end()))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| parse_err(lines, "header has no format line"))?,
        vertex_count: vertex_count.ok_or_else(|| parse_err(lines, "header has no vertex element"))?,
        properties,
        lines,
    })
}

/// Reads the vertex element: `x y z` (any numeric type) plus optional
/// `intensity`, `time` and `red green blue`.
pub fn read_ply<R: BufRead>(mut reader: R) -> Result<PlyData> {
    let h = read_header(&mut reader)?;
    let col = |name: &str| h.properties.iter().position(|(n, _)| n == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(invalid("PLY vertices need x, y and z")),
    };
    let intensity_col = col("intensity");
    let time_col = col("time");
    let rgb = match (col("red"), col("green"), col("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };

    let n = h.vertex_count;
    let mut positions = Vec::with_capacity(n);
    let mut intensity = intensity_col.map(|_| Vec::with_capacity(n));
    let mut time = time_col.map(|_| Vec::with_capacity(n));
    let mut color = rgb.map(|_| Vec::with_capacity(n));
    let mut row = vec![0.0; h.properties.len()];
    let mut push = |row: &[f64], line: usize| -> Result<()> {
        let p = Vec3::new(row[x], row[y], row[z]);
        if !p.iter().all(|c| c.is_finite()) {
            return Err(parse_err(line, "non-finite coordinate"));
        }
        positions.push(p);
        if let (Some(v), Some(c)) = (intensity.as_mut(), intensity_col) {
            v.push(row[c] as f32);
        }
        if let (Some(v), Some(c)) = (time.as_mut(), time_col) {
            v.push(row[c]);
        }
        if let (Some(v), Some([r, g, b])) = (color.as_mut(), rgb) {
            v.push([row[r] as u8, row[g] as u8, row[b] as u8]);
        }
        Ok(())
    };

    match h.encoding {
        PlyEncoding::Ascii => {
            let mut line = String::new();
            let mut lineno = h.lines;
            let mut read = 0;
            while read < n {
                line.clear();
                lineno += 1;
                if reader.read_line(&mut line)? == 0 {
                    return Err(parse_err(lineno, format!("expected {n} vertices, got {read}")));
                }
                if line.trim().is_empty() {
                    continue;
                }
                let mut fields = line.split_whitespace();
                for v in row.iter_mut() {
                    let f = fields.next().ok_or_else(|| parse_err(lineno, "too few vertex fields"))?;
                    *v = f.parse().map_err(|_| parse_err(lineno, format!("not a number: {f:?}")))?;
                }
                push(&row, lineno)?;
                read += 1;
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let stride: usize = h.properties.iter().map(|(_, s)| s.size()).sum();
            let mut buf = vec![0u8; stride];
            for i in 0..n {
                reader.read_exact(&mut buf).map_err(|e| match e.kind() {
                    std::io::ErrorKind::UnexpectedEof => {
                        invalid(format!("PLY body truncated: expected {n} vertices, got {i}"))
                    }
                    _ => Error::Io(e),
                })?;
                let mut off = 0;
                for (v, (_, s)) in row.iter_mut().zip(&h.properties) {
                    *v = s.decode(&buf[off..]);
                    off += s.size();
                }
                push(&row, i + 1)?;
            }
        }
    }

    let mut cloud = PointCloud::from_positions(positions);
    if let Some(v) = intensity {
        cloud = cloud.with_intensity(v)?;
    }
    if let Some(v) = color {
        cloud = cloud.with_color(v)?;
    }
    Ok(PlyData { cloud, time })
}

pub fn write_ply<W: Write>(mut w: W, cloud: &PointCloud, time: Option<&[f64]>, opts: &PlyOptions) -> Result<()> {
    if time.is_some_and(|t| t.len() != cloud.len()) {
        return Err(invalid("time length differs from point count"));
    }
    let coord = if opts.double_coordinates { "double" } else { "float" };
    let format = match opts.encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(w, "ply\nformat {format} 1.0\nelement vertex {}", cloud.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property {coord} {axis}")?;
    }
    if cloud.intensity().is_some() {
        writeln!(w, "property float intensity")?;
    }
    if time.is_some() {
        writeln!(w, "property double time")?;
    }
    if cloud.color().is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "end_header")?;

    let mut out = std::io::BufWriter::new(w);
    for (i, p) in cloud.positions().iter().enumerate() {
        match opts.encoding {
            PlyEncoding::Ascii => {
                if opts.double_coordinates {
                    write!(out, "{} {} {}", p.x, p.y, p.z)?;
                } else {
                    write!(out, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
                }
                if let Some(v) = cloud.intensity() {
                    write!(out, " {}", v[i])?;
                }
                if let Some(t) = time {
                    write!(out, " {}", t[i])?;
                }
                if let Some(c) = cloud.color() {
                    write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
                }
                writeln!(out)?;
            }
            PlyEncoding::BinaryLittleEndian => {
                for c in p.iter() {
                    if opts.double_coordinates {
                        out.write_all(&c.to_le_bytes())?;
                    } else {
                        out.write_all(&(*c as f32).to_le_bytes())?;
                    }
                }
                if let Some(v) = cloud.intensity() {
                    out.write_all(&v[i].to_le_bytes())?;
                }
                if let Some(t) = time {
                    out.write_all(&t[i].to_le_bytes())?;
                }
                if let Some(c) = cloud.color() {
                    out.write_all(&c[i])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}
