//! Point-cloud file I/O: KITTI-style `.bin`, PLY (ascii and binary
//! little-endian), and PCD v0.7 (ascii and binary). Formats are picked by
//! extension first and magic bytes second; writes are deterministic.

use nalgebra::Point3;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::meshing::TriangleMesh;

/// On-disk point cloud formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// N x 4 little-endian f32 (x, y, z, intensity).
    KittiBin,
    PlyBinary,
    PlyAscii,
    PcdBinary,
    PcdAscii,
}

impl std::str::FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bin" | "kitti" => Ok(Self::KittiBin),
            "ply" | "ply-binary" => Ok(Self::PlyBinary),
            "ply-ascii" => Ok(Self::PlyAscii),
            "pcd" | "pcd-binary" => Ok(Self::PcdBinary),
            "pcd-ascii" => Ok(Self::PcdAscii),
            other => Err(Error::UnknownFormat(other.into())),
        }
    }
}

fn malformed(offset: usize, reason: impl Into<String>) -> Error {
    Error::MalformedFile {
        offset,
        reason: reason.into(),
    }
}

/// Reads a point cloud, auto-detecting the format from the extension and the
/// leading magic bytes.
pub fn read_pointcloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("bin") => read_kitti_bin(&bytes),
        Some("ply") => read_ply(&bytes),
        Some("pcd") => read_pcd(&bytes),
        _ => {
            if bytes.starts_with(b"ply") {
                read_ply(&bytes)
            } else if bytes.starts_with(b"# .PCD") || bytes.starts_with(b"VERSION") {
                read_pcd(&bytes)
            } else if !bytes.is_empty() && bytes.len() % 16 == 0 {
                read_kitti_bin(&bytes)
            } else {
                Err(Error::UnknownFormat(path.display().to_string()))
            }
        }
    }
}

/// Writes a point cloud in the requested format.
pub fn write_pointcloud(path: &Path, pc: &PointCloud, format: CloudFormat) -> Result<()> {
    let bytes = match format {
        CloudFormat::KittiBin => encode_kitti_bin(pc),
        CloudFormat::PlyAscii => encode_ply(pc, false),
        CloudFormat::PlyBinary => encode_ply(pc, true),
        CloudFormat::PcdAscii => encode_pcd(pc, false),
        CloudFormat::PcdBinary => encode_pcd(pc, true),
    };
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

// -- KITTI .bin -----------------------------------------------------------

pub fn read_kitti_bin(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(16) {
        return Err(malformed(
            bytes.len() - bytes.len() % 16,
            format!("length {} is not a multiple of 16", bytes.len()),
        ));
    }
    let n = bytes.len() / 16;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(16).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[k * 4..k * 4 + 4].try_into().unwrap());
        let (x, y, z, w) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(malformed(i * 16, "non-finite coordinate"));
        }
        points.push(Point3::new(x as f64, y as f64, z as f64));
        intensity.push(w);
    }
    PointCloud::new(points, Some(intensity))
}

pub fn encode_kitti_bin(pc: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(pc.len() * 16);
    for (i, p) in pc.points.iter().enumerate() {
        out.extend_from_slice(&(p.x as f32).to_le_bytes());
        out.extend_from_slice(&(p.y as f32).to_le_bytes());
        out.extend_from_slice(&(p.z as f32).to_le_bytes());
        let w = pc.intensity.as_ref().map_or(0.0, |v| v[i]);
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

// -- PLY -------------------------------------------------------------------

fn ply_scalar_size(ty: &str) -> Option<usize> {
    match ty {
        "char" | "uchar" | "int8" | "uint8" => Some(1),
        "short" | "ushort" | "int16" | "uint16" => Some(2),
        "int" | "uint" | "int32" | "uint32" | "float" | "float32" => Some(4),
        "double" | "float64" => Some(8),
        _ => None,
    }
}

struct TextCursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> TextCursor<'a> {
    fn line(&mut self) -> Result<(&'a str, usize)> {
        let start = self.offset;
        if start >= self.bytes.len() {
            return Err(malformed(start, "unexpected end of file"));
        }
        let end = self.bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| start + p)
            .unwrap_or(self.bytes.len());
        self.offset = (end + 1).min(self.bytes.len());
        let raw = &self.bytes[start..end];
        let line =
            std::str::from_utf8(raw).map_err(|_| malformed(start, "non-UTF-8 header line"))?;
        Ok((line.trim_end_matches('\r'), start))
    }
}

fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    let mut cur = TextCursor { bytes, offset: 0 };
    let (magic, off) = cur.line()?;
    if magic != "ply" {
        return Err(malformed(off, "missing 'ply' magic"));
    }
    let mut binary = None;
    let mut vertex_count = None;
    // (name, size) per scalar vertex property, in order
    let mut properties: Vec<(String, String)> = Vec::new();
    let mut in_vertex_element = false;
    loop {
        let (line, off) = cur.line()?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => match words.next() {
                Some("ascii") => binary = Some(false),
                Some("binary_little_endian") => binary = Some(true),
                other => return Err(malformed(off, format!("unsupported format {other:?}"))),
            },
            Some("element") => {
                let name = words.next().unwrap_or("");
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| malformed(off, "bad element count"))?;
                in_vertex_element = name == "vertex";
                if in_vertex_element {
                    vertex_count = Some(count);
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    continue; // faces etc. come after vertices; we stop there
                }
                let ty = words.next().unwrap_or("");
                if ty == "list" {
                    return Err(malformed(off, "list property on vertex element"));
                }
                let name = words.next().unwrap_or("");
                if ply_scalar_size(ty).is_none() {
                    return Err(malformed(off, format!("unknown property type {ty}")));
                }
                properties.push((name.to_string(), ty.to_string()));
            }
            Some("end_header") => break,
            Some(other) => return Err(malformed(off, format!("unknown header keyword {other}"))),
        }
    }
    let binary = binary.ok_or_else(|| malformed(0, "missing format line"))?;
    let count = vertex_count.ok_or_else(|| malformed(0, "missing vertex element"))?;
    let find = |name: &str| properties.iter().position(|(n, _)| n == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(malformed(0, "vertex element lacks x/y/z")),
    };
    // intensity is optional and only usable when stored as a float type
    let ii = find("intensity").filter(|&idx| {
        matches!(
            properties[idx].1.as_str(),
            "float" | "float32" | "double" | "float64"
        )
    });

    let mut points = Vec::with_capacity(count);
    let mut intensity = ii.map(|_| Vec::with_capacity(count));
    if binary {
        let sizes: Vec<usize> = properties
            .iter()
            .map(|(_, ty)| ply_scalar_size(ty).unwrap())
            .collect();
        let record: usize = sizes.iter().sum();
        let body = &bytes[cur.offset..];
        if body.len() < record * count {
            return Err(malformed(
                bytes.len(),
                format!("need {} vertex bytes, have {}", record * count, body.len()),
            ));
        }
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0usize, |acc, s| {
                let here = *acc;
                *acc += s;
                Some(here)
            })
            .collect();
        let scalar = |rec: &[u8], idx: usize| -> Result<f64> {
            let off = offsets[idx];
            Ok(match properties[idx].1.as_str() {
                "float" | "float32" => {
                    f32::from_le_bytes(rec[off..off + 4].try_into().unwrap()) as f64
                }
                "double" | "float64" => f64::from_le_bytes(rec[off..off + 8].try_into().unwrap()),
                other => {
                    return Err(malformed(
                        cur.offset,
                        format!("coordinate property has non-float type {other}"),
                    ))
                }
            })
        };
        for rec in body.chunks_exact(record).take(count) {
            points.push(Point3::new(
                scalar(rec, ix)?,
                scalar(rec, iy)?,
                scalar(rec, iz)?,
            ));
            if let (Some(v), Some(idx)) = (intensity.as_mut(), ii) {
                v.push(scalar(rec, idx)? as f32);
            }
        }
    } else {
        for _ in 0..count {
            let (line, off) = cur.line()?;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|w| w.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| malformed(off, format!("{e}")))?;
            if values.len() < properties.len() {
                return Err(malformed(off, "short vertex line"));
            }
            points.push(Point3::new(values[ix], values[iy], values[iz]));
            if let (Some(v), Some(idx)) = (intensity.as_mut(), ii) {
                v.push(values[idx] as f32);
            }
        }
    }
    PointCloud::new(points, intensity)
}

fn encode_ply(pc: &PointCloud, binary: bool) -> Vec<u8> {
    let mut header = String::new();
    header.push_str("ply\n");
    header.push_str(if binary {
        "format binary_little_endian 1.0\n"
    } else {
        "format ascii 1.0\n"
    });
    header.push_str(&format!("element vertex {}\n", pc.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if pc.intensity.is_some() {
        header.push_str("property float intensity\n");
    }
    header.push_str("end_header\n");

    let mut out = header.into_bytes();
    for (i, p) in pc.points.iter().enumerate() {
        let coords = [p.x as f32, p.y as f32, p.z as f32];
        let w = pc.intensity.as_ref().map(|v| v[i]);
        if binary {
            for c in coords {
                out.extend_from_slice(&c.to_le_bytes());
            }
            if let Some(w) = w {
                out.extend_from_slice(&w.to_le_bytes());
            }
        } else {
            let mut line = format!("{} {} {}", coords[0], coords[1], coords[2]);
            if let Some(w) = w {
                line.push_str(&format!(" {w}"));
            }
            line.push('\n');
            out.extend_from_slice(line.as_bytes());
        }
    }
    out
}

/// ASCII PLY export of a triangle mesh (debugging aid).
pub fn write_mesh_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    out.push_str(&format!("element vertex {}\n", mesh.vertices_3d.len()));
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str(&format!("element face {}\n", mesh.triangles.len()));
    out.push_str("property list uchar int vertex_indices\n");
    out.push_str("end_header\n");
    for v in &mesh.vertices_3d {
        out.push_str(&format!("{} {} {}\n", v.x as f32, v.y as f32, v.z as f32));
    }
    for t in &mesh.triangles {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// -- PCD v0.7 ----------------------------------------------------------------

fn read_pcd(bytes: &[u8]) -> Result<PointCloud> {
    let mut cur = TextCursor { bytes, offset: 0 };
    let mut fields: Vec<String> = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    let mut types: Vec<String> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut points_n = None;
    let data = loop {
        let (line, off) = cur.line()?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let key = words.next().unwrap_or("");
        let rest: Vec<&str> = words.collect();
        match key {
            "VERSION" => {}
            "FIELDS" | "COLUMNS" => fields = rest.iter().map(|s| s.to_string()).collect(),
            "SIZE" => {
                sizes = rest
                    .iter()
                    .map(|s| s.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| malformed(off, format!("{e}")))?
            }
            "TYPE" => types = rest.iter().map(|s| s.to_string()).collect(),
            "COUNT" => {
                counts = rest
                    .iter()
                    .map(|s| s.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| malformed(off, format!("{e}")))?
            }
            "WIDTH" | "HEIGHT" | "VIEWPOINT" => {}
            "POINTS" => {
                points_n = Some(
                    rest.first()
                        .and_then(|w| w.parse::<usize>().ok())
                        .ok_or_else(|| malformed(off, "bad POINTS"))?,
                )
            }
            "DATA" => break rest.first().unwrap_or(&"").to_string(),
            other => return Err(malformed(off, format!("unknown PCD key {other}"))),
        }
    };
    let n = points_n.ok_or_else(|| malformed(0, "missing POINTS"))?;
    if counts.is_empty() {
        counts = vec![1; fields.len()];
    }
    if sizes.len() != fields.len() || types.len() != fields.len() || counts.len() != fields.len() {
        return Err(malformed(0, "FIELDS/SIZE/TYPE/COUNT lengths disagree"));
    }
    let find = |name: &str| fields.iter().position(|f| f == name);
    let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(malformed(0, "PCD lacks x/y/z fields")),
    };
    // only a scalar F4 intensity can be carried over
    let ii = find("intensity")
        .filter(|&idx| types[idx] == "F" && sizes[idx] == 4 && counts[idx] == 1);
    for idx in [ix, iy, iz] {
        if types[idx] != "F" || sizes[idx] != 4 || counts[idx] != 1 {
            return Err(malformed(0, "x/y/z must be scalar F4"));
        }
    }

    let mut points = Vec::with_capacity(n);
    let mut intensity = ii.map(|_| Vec::with_capacity(n));
    match data.as_str() {
        "ascii" => {
            // per-record column index for multi-count fields
            let col_of = |field: usize| -> usize { counts[..field].iter().sum() };
            for _ in 0..n {
                let (line, off) = cur.line()?;
                let values: Vec<f64> = line
                    .split_whitespace()
                    .map(|w| w.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| malformed(off, format!("{e}")))?;
                let total: usize = counts.iter().sum();
                if values.len() < total {
                    return Err(malformed(off, "short PCD line"));
                }
                points.push(Point3::new(
                    values[col_of(ix)],
                    values[col_of(iy)],
                    values[col_of(iz)],
                ));
                if let (Some(v), Some(idx)) = (intensity.as_mut(), ii) {
                    v.push(values[col_of(idx)] as f32);
                }
            }
        }
        "binary" => {
            let record: usize = sizes.iter().zip(&counts).map(|(s, c)| s * c).sum();
            let body = &bytes[cur.offset..];
            if body.len() < record * n {
                return Err(malformed(
                    bytes.len(),
                    format!("need {} body bytes, have {}", record * n, body.len()),
                ));
            }
            let byte_off = |field: usize| -> usize {
                sizes[..field]
                    .iter()
                    .zip(&counts[..field])
                    .map(|(s, c)| s * c)
                    .sum()
            };
            let read_f32 = |rec: &[u8], field: usize| -> f32 {
                let off = byte_off(field);
                f32::from_le_bytes(rec[off..off + 4].try_into().unwrap())
            };
            for rec in body.chunks_exact(record).take(n) {
                points.push(Point3::new(
                    read_f32(rec, ix) as f64,
                    read_f32(rec, iy) as f64,
                    read_f32(rec, iz) as f64,
                ));
                if let (Some(v), Some(idx)) = (intensity.as_mut(), ii) {
                    v.push(read_f32(rec, idx));
                }
            }
        }
        other => return Err(malformed(0, format!("unsupported DATA mode {other}"))),
    }
    PointCloud::new(points, intensity)
}

fn encode_pcd(pc: &PointCloud, binary: bool) -> Vec<u8> {
    let with_intensity = pc.intensity.is_some();
    let mut header = String::new();
    header.push_str("# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\n");
    if with_intensity {
        header.push_str("FIELDS x y z intensity\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n");
    } else {
        header.push_str("FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n");
    }
    header.push_str(&format!("WIDTH {}\nHEIGHT 1\n", pc.len()));
    header.push_str("VIEWPOINT 0 0 0 1 0 0 0\n");
    header.push_str(&format!("POINTS {}\n", pc.len()));
    header.push_str(if binary {
        "DATA binary\n"
    } else {
        "DATA ascii\n"
    });

    let mut out = header.into_bytes();
    for (i, p) in pc.points.iter().enumerate() {
        let coords = [p.x as f32, p.y as f32, p.z as f32];
        let w = pc.intensity.as_ref().map(|v| v[i]);
        if binary {
            for c in coords {
                out.extend_from_slice(&c.to_le_bytes());
            }
            if let Some(w) = w {
                out.extend_from_slice(&w.to_le_bytes());
            }
        } else {
            let mut line = format!("{} {} {}", coords[0], coords[1], coords[2]);
            if let Some(w) = w {
                line.push_str(&format!(" {w}"));
            }
            line.push('\n');
            out.extend_from_slice(line.as_bytes());
        }
    }
    out
}
