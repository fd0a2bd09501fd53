//! Virtual-grid upsampling: cast one ray per cell of the high-resolution
//! grid against the scan mesh and keep the nearest hit.
//!
//! Rays are organized by (elevation, azimuth). Triangles are binned by a
//! conservative angular extent so each ray only tests the triangles whose
//! spherical footprint can contain its direction; the result must equal the
//! brute-force minimum over all triangles. The extent bounds come from the
//! fact that the set of directions hitting a triangle is the spherical
//! triangle spanned by its vertex directions: elevation along a geodesic arc
//! is 1-Lipschitz in arc length, and azimuth is 1/cos(elevation)-Lipschitz,
//! so padding the vertex extents by half the longest edge arc (scaled for
//! azimuth) covers every interior direction. Triangles that reach a pole or
//! subtend a huge angle fall back to full-grid registration.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{Error, Result};
use crate::geometry::{direction_from_angles, DepthImage, SensorModel};
use crate::meshing::TriangleMesh;

/// Rays closer than this along the ray are rejected as self-intersections.
const MIN_RAY_T: f64 = 1e-6;
/// Barycentric slack so rays passing exactly through vertices or edges hit.
const BARY_EPS: f64 = 1e-12;
/// Tile edge (in cells) of the acceleration grid.
const TILE: usize = 8;

/// The dense ray grid implied by a sensor's rates.
#[derive(Debug, Clone, Copy)]
pub struct VirtualGrid {
    pub sensor: SensorModel,
}

impl VirtualGrid {
    pub fn new(sensor: SensorModel) -> Self {
        Self { sensor }
    }

    pub fn rows(&self) -> usize {
        self.sensor.rows()
    }

    pub fn cols(&self) -> usize {
        self.sensor.cols()
    }

    /// Unit ray direction through the center of cell `(row, col)`.
    pub fn direction(&self, row: usize, col: usize) -> Vector3<f64> {
        direction_from_angles(self.sensor.row_elevation(row), self.sensor.col_azimuth(col))
    }
}

/// Moller-Trumbore ray/triangle intersection. Both-sided (no back-face
/// culling), inclusive edges, and the smallest positive distance along the
/// unit direction. `None` for parallel, behind-origin, or outside hits.
pub fn ray_triangle_intersect(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    tri: &[Point3<f64>; 3],
) -> Option<f64> {
    let edge1 = tri[1] - tri[0];
    let edge2 = tri[2] - tri[0];
    let pvec = dir.cross(&edge2);
    let det = edge1.dot(&pvec);
    if det.abs() < 1e-300 {
        return None; // parallel to the triangle plane
    }
    let inv_det = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(&pvec) * inv_det;
    if !(-BARY_EPS..=1.0 + BARY_EPS).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&edge1);
    let v = dir.dot(&qvec) * inv_det;
    if v < -BARY_EPS || u + v > 1.0 + BARY_EPS {
        return None;
    }
    let t = edge2.dot(&qvec) * inv_det;
    if t > MIN_RAY_T {
        Some(t)
    } else {
        None
    }
}

/// Conservative angular footprint of one triangle as seen from the origin.
enum Footprint {
    /// [elev_lo, elev_hi] x azimuth interval [start, start + span] (mod 2*pi).
    Band {
        elev_lo: f64,
        elev_hi: f64,
        az_start: f64,
        az_span: f64,
    },
    /// Bounds could not be trusted; test the triangle against every ray.
    Full,
}

fn triangle_footprint(tri: &[Point3<f64>; 3]) -> Option<Footprint> {
    let mut dirs = [Vector3::zeros(); 3];
    for (d, p) in dirs.iter_mut().zip(tri.iter()) {
        let norm = p.coords.norm();
        if norm < MIN_RAY_T {
            return Some(Footprint::Full); // vertex at the sensor origin
        }
        *d = p.coords / norm;
    }
    // longest edge arc
    let mut gamma_max = 0.0f64;
    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
        let c = dirs[i].dot(&dirs[j]).clamp(-1.0, 1.0);
        gamma_max = gamma_max.max(c.acos());
    }
    if gamma_max >= FRAC_PI_2 {
        // giant footprint (possibly wrapping the origin); be exact, not clever
        return Some(Footprint::Full);
    }
    let pad = gamma_max / 2.0;

    let elevs = dirs.map(|d| d.z.clamp(-1.0, 1.0).asin());
    let elev_lo = (elevs.iter().cloned().fold(f64::INFINITY, f64::min) - pad).max(-FRAC_PI_2);
    let elev_hi = (elevs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + pad).min(FRAC_PI_2);
    if elev_hi >= FRAC_PI_2 - 1e-12 || elev_lo <= -FRAC_PI_2 + 1e-12 {
        return Some(Footprint::Full); // footprint may reach a pole
    }
    let cos_min = elev_lo.abs().max(elev_hi.abs()).cos();
    let az_pad = pad / cos_min;

    // cyclic azimuth span of the vertices: complement of the largest gap
    let mut az: Vec<f64> = dirs
        .iter()
        .map(|d| {
            let a = d.y.atan2(d.x);
            if a < 0.0 {
                a + TAU
            } else {
                a
            }
        })
        .collect();
    az.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let gaps = [az[1] - az[0], az[2] - az[1], az[0] + TAU - az[2]];
    let (largest, gap) = gaps
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let span = TAU - gap + 2.0 * az_pad;
    if span >= TAU {
        return Some(Footprint::Full);
    }
    let start = az[(largest + 1) % 3] - az_pad;
    Some(Footprint::Band {
        elev_lo,
        elev_hi,
        az_start: start,
        az_span: span,
    })
}

struct TileGrid {
    tiles_x: usize,
    tiles_y: usize,
    lists: Vec<Vec<u32>>,
}

impl TileGrid {
    fn new(rows: usize, cols: usize) -> Self {
        let tiles_y = rows.div_ceil(TILE);
        let tiles_x = cols.div_ceil(TILE);
        Self {
            tiles_x,
            tiles_y,
            lists: vec![Vec::new(); tiles_x * tiles_y],
        }
    }

    fn insert(&mut self, ty: usize, tx: usize, id: u32) {
        self.lists[ty * self.tiles_x + tx].push(id);
    }

    fn list(&self, row: usize, col: usize) -> &[u32] {
        &self.lists[(row / TILE) * self.tiles_x + (col / TILE)]
    }
}

/// Columns whose centers fall inside `[lo, hi]` (radians, unwrapped), as an
/// inclusive index range clipped to the actual grid; wrapped modulo the
/// column count for full-circle sensors.
fn col_tiles(
    sensor: &SensorModel,
    lo: f64,
    hi: f64,
    grid: &mut TileGrid,
    row_tile_range: (usize, usize),
    id: u32,
) {
    let cols = sensor.cols();
    let dh = sensor.delta_h();
    let full_circle = (sensor.horizontal_fov_rad - TAU).abs() < 1e-9;
    let j_lo = ((lo / dh) - 0.5 - 1e-9).ceil() as i64;
    let j_hi = ((hi / dh) - 0.5 + 1e-9).floor() as i64;
    if j_hi < j_lo {
        return;
    }
    let mut seen = vec![false; grid.tiles_x];
    if full_circle {
        let n = cols as i64;
        if j_hi - j_lo + 1 >= n {
            seen.fill(true);
        } else {
            for j in j_lo..=j_hi {
                let col = j.rem_euclid(n) as usize;
                seen[col / TILE] = true;
            }
        }
    } else if j_hi >= 0 && j_lo < cols as i64 {
        let lo_c = j_lo.clamp(0, cols as i64 - 1) as usize;
        let hi_c = j_hi.clamp(0, cols as i64 - 1) as usize;
        seen[lo_c / TILE..=hi_c / TILE].fill(true);
    }
    for (tx, hit) in seen.iter().enumerate() {
        if *hit {
            for ty in row_tile_range.0..=row_tile_range.1 {
                grid.insert(ty, tx, id);
            }
        }
    }
}

fn build_tile_grid(mesh: &TriangleMesh, sensor: &SensorModel) -> TileGrid {
    let rows = sensor.rows();
    let cols = sensor.cols();
    let mut grid = TileGrid::new(rows, cols);
    let dv = sensor.delta_v();
    let half_v = sensor.vertical_fov_rad / 2.0;

    for (id, tri) in mesh.triangles.iter().enumerate() {
        let verts = [
            mesh.vertices_3d[tri[0]],
            mesh.vertices_3d[tri[1]],
            mesh.vertices_3d[tri[2]],
        ];
        let footprint = match triangle_footprint(&verts) {
            Some(f) => f,
            None => continue,
        };
        match footprint {
            Footprint::Full => {
                for ty in 0..grid.tiles_y {
                    for tx in 0..grid.tiles_x {
                        grid.insert(ty, tx, id as u32);
                    }
                }
            }
            Footprint::Band {
                elev_lo,
                elev_hi,
                az_start,
                az_span,
            } => {
                let r_lo = (((elev_lo + half_v) / dv) - 0.5 - 1e-9).ceil() as i64;
                let r_hi = (((elev_hi + half_v) / dv) - 0.5 + 1e-9).floor() as i64;
                if r_hi < 0 || r_lo >= rows as i64 || r_hi < r_lo {
                    continue; // outside the vertical FoV band
                }
                let r_lo = r_lo.clamp(0, rows as i64 - 1) as usize;
                let r_hi = r_hi.clamp(0, rows as i64 - 1) as usize;
                col_tiles(
                    sensor,
                    az_start,
                    az_start + az_span,
                    &mut grid,
                    (r_lo / TILE, r_hi / TILE),
                    id as u32,
                );
            }
        }
    }
    grid
}

/// Casts the virtual grid against the mesh. Each cell stores the distance to
/// the nearest intersected triangle; cells whose ray misses stay empty.
pub fn upsample(mesh: &TriangleMesh, sensor: &SensorModel) -> Result<DepthImage> {
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let grid = VirtualGrid::new(*sensor);
    let tiles = build_tile_grid(mesh, sensor);
    let rows = grid.rows();
    let cols = grid.cols();
    let origin = Point3::origin();

    let row_results: Vec<Vec<Option<f64>>> = (0..rows)
        .into_par_iter()
        .map(|row| {
            let mut out = vec![None; cols];
            for (col, slot) in out.iter_mut().enumerate() {
                let dir = grid.direction(row, col);
                let mut best: Option<f64> = None;
                for &id in tiles.list(row, col) {
                    let tri = &mesh.triangles[id as usize];
                    let verts = [
                        mesh.vertices_3d[tri[0]],
                        mesh.vertices_3d[tri[1]],
                        mesh.vertices_3d[tri[2]],
                    ];
                    if let Some(t) = ray_triangle_intersect(&origin, &dir, &verts) {
                        best = Some(match best {
                            Some(b) => b.min(t),
                            None => t,
                        });
                    }
                }
                *slot = best;
            }
            out
        })
        .collect();

    let mut image = DepthImage::empty(*sensor);
    for (row, ranges) in row_results.into_iter().enumerate() {
        for (col, range) in ranges.into_iter().enumerate() {
            if let Some(t) = range {
                image.set(row, col, t);
            }
        }
    }
    Ok(image)
}
