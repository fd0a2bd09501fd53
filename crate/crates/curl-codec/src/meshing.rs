//! Triangular meshing of one scan via a 2D polar parametrization.
//!
//! Each point is mapped to the plane with its channel order as radius and its
//! azimuth as angle, `(u, v) = (n cos(phi), n sin(phi))`. Delaunay
//! triangulation of the embedded points produces connectivity whose boundary
//! is the 2D convex hull (watertight in parameter space), and the triangles
//! are lifted back onto the original 3D points. The disc embedding closes the
//! azimuth seam automatically: points at phi ~ 0 and phi ~ 2*pi land next to
//! each other.

use delaunator::{triangulate, Point as DPoint};
use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::{cart_to_spherical, PointCloud, SensorModel};

/// 2D mesh parametrization of a scan.
#[derive(Debug, Clone)]
pub struct ScanGrid2D {
    /// Embedded coordinates `(n cos(phi), n sin(phi))`.
    pub vertices_2d: Vec<(f64, f64)>,
    /// Index of the originating point in the source cloud.
    pub source_index: Vec<usize>,
    /// Recovered channel order, in `[1, L]`.
    pub channel: Vec<usize>,
    /// Azimuth per vertex, in `[0, 2*pi)`.
    pub azimuth: Vec<f64>,
    /// 3D positions of the valid vertices, aligned with `vertices_2d`.
    pub points_3d: Vec<Point3<f64>>,
}

impl ScanGrid2D {
    pub fn len(&self) -> usize {
        self.vertices_2d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices_2d.is_empty()
    }
}

/// 3D triangle mesh with indices into `vertices_3d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices_3d: Vec<Point3<f64>>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

/// Minimum 2D area (channel-index units squared) below which a triangle is
/// culled as degenerate.
const DEGENERATE_AREA: f64 = 1e-12;

/// Assigns each point a channel by elevation binning against the sensor's
/// uniform vertical bins (same binning as the depth-image projection) and
/// embeds it in the parameter plane. Points outside the FoV are skipped.
pub fn build_polar_grid(pc: &PointCloud, sensor: &SensorModel) -> Result<ScanGrid2D> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let base = sensor.base_resolution();
    let mut grid = ScanGrid2D {
        vertices_2d: Vec::with_capacity(pc.len()),
        source_index: Vec::with_capacity(pc.len()),
        channel: Vec::with_capacity(pc.len()),
        azimuth: Vec::with_capacity(pc.len()),
        points_3d: Vec::with_capacity(pc.len()),
    };
    for (i, p) in pc.points.iter().enumerate() {
        let s = match cart_to_spherical(p) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let Some(row) = base.row_of_elevation(s.elevation_rad()) else {
            continue;
        };
        let n = (row + 1) as f64;
        grid.vertices_2d
            .push((n * s.azimuth_rad.cos(), n * s.azimuth_rad.sin()));
        grid.source_index.push(i);
        grid.channel.push(row + 1);
        grid.azimuth.push(s.azimuth_rad);
        grid.points_3d.push(*p);
    }
    if grid.is_empty() {
        return Err(Error::ChannelRecoveryFailed(
            "no point maps into the sensor's vertical FoV".into(),
        ));
    }
    Ok(grid)
}

fn triangle_area_2d(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    0.5 * ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).abs()
}

fn coord(p: (f64, f64)) -> robust::Coord<f64> {
    robust::Coord { x: p.0, y: p.1 }
}

/// Unordered diagonal key used to break exact cocircular ties: the
/// lexicographically smaller (sorted) pair of endpoint coordinates wins.
fn diagonal_key(pts: &[(f64, f64)], i: usize, j: usize) -> ((f64, f64), (f64, f64)) {
    let (a, b) = (pts[i], pts[j]);
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// For exactly cocircular quads both diagonals satisfy the Delaunay
/// condition; flip interior edges so the stored diagonal is the canonical
/// (lexicographically smallest) one. Exact ties only happen on synthetic
/// symmetric inputs, so this is a cheap fixpoint pass in practice.
fn canonicalize_cocircular_ties(pts: &[(f64, f64)], triangles: &mut [[usize; 3]]) {
    use std::collections::HashMap;
    for _ in 0..16 {
        let mut edges: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                edges.entry(key).or_default().push((t, tri[(k + 2) % 3]));
            }
        }
        let mut flipped = false;
        let mut dirty = vec![false; triangles.len()];
        let mut keys: Vec<_> = edges.keys().cloned().collect();
        keys.sort_unstable();
        for key in keys {
            let users = &edges[&key];
            if users.len() != 2 {
                continue;
            }
            let ((t1, c), (t2, d)) = (users[0], users[1]);
            if dirty[t1] || dirty[t2] {
                continue;
            }
            let (a, b) = key;
            let det = robust::incircle(coord(pts[a]), coord(pts[b]), coord(pts[c]), coord(pts[d]));
            if det != 0.0 {
                continue; // not an exact tie
            }
            if diagonal_key(pts, c, d) >= diagonal_key(pts, a, b) {
                continue; // current diagonal already canonical
            }
            // only flip strictly convex quads
            let o1 = robust::orient2d(coord(pts[c]), coord(pts[d]), coord(pts[a]));
            let o2 = robust::orient2d(coord(pts[c]), coord(pts[d]), coord(pts[b]));
            if o1 == 0.0 || o2 == 0.0 || (o1 > 0.0) == (o2 > 0.0) {
                continue;
            }
            triangles[t1] = [c, d, a];
            triangles[t2] = [d, c, b];
            dirty[t1] = true;
            dirty[t2] = true;
            flipped = true;
        }
        if !flipped {
            break;
        }
    }
}

/// Delaunay-triangulates the embedded 2D vertices and lifts the connectivity
/// onto the 3D points.
pub fn delaunay_2d(grid: &ScanGrid2D) -> Result<TriangleMesh> {
    if grid.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "{} vertices, need at least 3",
            grid.len()
        )));
    }
    let points: Vec<DPoint> = grid
        .vertices_2d
        .iter()
        .map(|&(x, y)| DPoint { x, y })
        .collect();
    let triangulation = triangulate(&points);
    if triangulation.triangles.is_empty() {
        return Err(Error::DegenerateInput(
            "all vertices collinear in the parameter plane".into(),
        ));
    }
    let mut triangles: Vec<[usize; 3]> = triangulation
        .triangles
        .chunks_exact(3)
        .map(|t| [t[0], t[1], t[2]])
        .filter(|t| {
            triangle_area_2d(
                grid.vertices_2d[t[0]],
                grid.vertices_2d[t[1]],
                grid.vertices_2d[t[2]],
            ) >= DEGENERATE_AREA
        })
        .collect();
    canonicalize_cocircular_ties(&grid.vertices_2d, &mut triangles);
    Ok(TriangleMesh {
        vertices_3d: grid.points_3d.clone(),
        triangles,
    })
}

/// Convenience: polar grid + triangulation in one call.
pub fn mesh_scan(pc: &PointCloud, sensor: &SensorModel) -> Result<TriangleMesh> {
    let grid = build_polar_grid(pc, sensor)?;
    delaunay_2d(&grid)
}
