//! Coordinate conventions, spherical transforms, and depth-image projection.
//!
//! All other modules rely on the conventions fixed here:
//!
//! - **polar** angle is measured from the +z axis, in `[0, pi]`
//! - **azimuth** is counter-clockwise from +x in `[0, 2*pi)`
//! - **elevation** is the complement `pi/2 - polar`, in `[-pi/2, pi/2]`,
//!   used for depth-image rows (row 0 sits at the bottom of the FoV)
//! - angles are radians everywhere; degrees only exist at CLI parsing
//!
//! A [`DepthImage`] is a dense grid of radial ranges at the resolution implied
//! by its [`SensorModel`] (rows = channels * row_rate, cols = bins * col_rate).
//! Empty cells carry an explicit flag rather than a sentinel range value.

use nalgebra::{Point3, Vector3};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};

/// Spinning-LiDAR geometry: fields of view, channel/bin counts, and the
/// upsampling rates that define the virtual grid resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    /// Vertical field of view in radians, centered on the horizon.
    pub vertical_fov_rad: f64,
    /// Horizontal field of view in radians, normally `2*pi`.
    pub horizontal_fov_rad: f64,
    /// Number of laser channels (rings).
    pub channels: usize,
    /// Number of horizontal bins per revolution.
    pub horizontal_bins: usize,
    /// Row upsampling rate.
    pub row_rate: usize,
    /// Column upsampling rate.
    pub col_rate: usize,
}

impl SensorModel {
    pub fn new(
        vertical_fov_rad: f64,
        horizontal_fov_rad: f64,
        channels: usize,
        horizontal_bins: usize,
        row_rate: usize,
        col_rate: usize,
    ) -> Result<Self> {
        if channels < 1 || horizontal_bins < 1 || row_rate < 1 || col_rate < 1 {
            return Err(Error::InvalidConfig(
                "channels, bins and rates must all be >= 1".into(),
            ));
        }
        // these travel as u16 in the container
        for (name, value) in [
            ("channels", channels),
            ("horizontal_bins", horizontal_bins),
            ("row_rate", row_rate),
            ("col_rate", col_rate),
        ] {
            if value > u16::MAX as usize {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {value} exceeds {}",
                    u16::MAX
                )));
            }
        }
        if !(vertical_fov_rad > 0.0 && vertical_fov_rad <= PI) {
            return Err(Error::InvalidConfig(format!(
                "vertical FoV {vertical_fov_rad} rad outside (0, pi]"
            )));
        }
        if !(horizontal_fov_rad > 0.0 && horizontal_fov_rad <= TAU) {
            return Err(Error::InvalidConfig(format!(
                "horizontal FoV {horizontal_fov_rad} rad outside (0, 2*pi]"
            )));
        }
        Ok(Self {
            vertical_fov_rad,
            horizontal_fov_rad,
            channels,
            horizontal_bins,
            row_rate,
            col_rate,
        })
    }

    /// Depth-image rows at this sensor's rates.
    pub fn rows(&self) -> usize {
        self.channels * self.row_rate
    }

    /// Depth-image columns at this sensor's rates.
    pub fn cols(&self) -> usize {
        self.horizontal_bins * self.col_rate
    }

    /// Vertical angular resolution `theta_v / (L * S_row)`.
    pub fn delta_v(&self) -> f64 {
        self.vertical_fov_rad / self.rows() as f64
    }

    /// Horizontal angular resolution `theta_h / (N_h * S_col)`.
    pub fn delta_h(&self) -> f64 {
        self.horizontal_fov_rad / self.cols() as f64
    }

    /// Same sensor with both rates forced to 1 (the measured resolution).
    pub fn base_resolution(&self) -> SensorModel {
        SensorModel {
            row_rate: 1,
            col_rate: 1,
            ..*self
        }
    }

    /// Same sensor with the given upsampling rates.
    pub fn with_rates(&self, row_rate: usize, col_rate: usize) -> Result<SensorModel> {
        SensorModel::new(
            self.vertical_fov_rad,
            self.horizontal_fov_rad,
            self.channels,
            self.horizontal_bins,
            row_rate,
            col_rate,
        )
    }

    /// Center elevation of row `i`, `(i + 0.5) * delta_v - theta_v / 2`.
    pub fn row_elevation(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.delta_v() - self.vertical_fov_rad / 2.0
    }

    /// Center azimuth of column `j`, `(j + 0.5) * delta_h`.
    pub fn col_azimuth(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.delta_h()
    }

    /// Row index for an elevation inside the FoV; `None` outside.
    ///
    /// The top FoV edge maps into the last row so that boundary returns are
    /// kept rather than dropped.
    pub fn row_of_elevation(&self, elevation: f64) -> Option<usize> {
        let half = self.vertical_fov_rad / 2.0;
        if elevation < -half || elevation > half {
            return None;
        }
        let row = ((elevation + half) / self.delta_v()).floor() as isize;
        Some((row.max(0) as usize).min(self.rows() - 1))
    }

    /// Column index for an azimuth inside the FoV; `None` outside.
    pub fn col_of_azimuth(&self, azimuth: f64) -> Option<usize> {
        if azimuth < 0.0 || azimuth > self.horizontal_fov_rad {
            return None;
        }
        let col = (azimuth / self.delta_h()).floor() as isize;
        Some((col.max(0) as usize).min(self.cols() - 1))
    }
}

/// A point in the canonical spherical frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    /// Angle from +z, in `[0, pi]`.
    pub polar_rad: f64,
    /// Angle CCW from +x, in `[0, 2*pi)`.
    pub azimuth_rad: f64,
    /// Radial distance in meters, > 0.
    pub range_m: f64,
}

impl SphericalPoint {
    /// Elevation above the xy-plane, `pi/2 - polar`.
    pub fn elevation_rad(&self) -> f64 {
        FRAC_PI_2 - self.polar_rad
    }
}

/// Ordered set of 3D points with optional per-point intensity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub intensity: Option<Vec<f32>>,
}

impl PointCloud {
    /// Builds a cloud, validating finiteness and intensity length.
    pub fn new(points: Vec<Point3<f64>>, intensity: Option<Vec<f32>>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "non-finite coordinate at point {i}"
                )));
            }
        }
        if let Some(ref int) = intensity {
            if int.len() != points.len() {
                return Err(Error::InvalidConfig(format!(
                    "intensity length {} != point count {}",
                    int.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, intensity })
    }

    pub fn from_points(points: Vec<Point3<f64>>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Dense grid of radial ranges indexed by (elevation row, azimuth column).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    rows: usize,
    cols: usize,
    cells: Vec<Option<f64>>,
    pub sensor: SensorModel,
}

impl DepthImage {
    /// All-empty image at the sensor's resolution.
    pub fn empty(sensor: SensorModel) -> Self {
        let rows = sensor.rows();
        let cols = sensor.cols();
        Self {
            rows,
            cols,
            cells: vec![None; rows * cols],
            sensor,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.cols + col]
    }

    /// Sets a cell; `range` must be finite and positive.
    pub fn set(&mut self, row: usize, col: usize, range: f64) {
        debug_assert!(range.is_finite() && range > 0.0);
        self.cells[row * self.cols + col] = Some(range);
    }

    pub fn clear(&mut self, row: usize, col: usize) {
        self.cells[row * self.cols + col] = None;
    }

    /// Number of non-empty cells.
    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(idx, c)| c.map(|r| (idx / self.cols, idx % self.cols, r)))
    }
}

/// Projection output: the depth image plus how many points fell outside the FoV.
#[derive(Debug, Clone)]
pub struct Projection {
    pub image: DepthImage,
    pub out_of_fov: usize,
}

/// Normalizes an angle to `[0, 2*pi)`.
pub fn normalize_azimuth(angle: f64) -> f64 {
    let mut a = angle % TAU;
    if a < 0.0 {
        a += TAU;
    }
    if a >= TAU {
        a = 0.0;
    }
    a
}

/// Converts a Cartesian point to the canonical spherical frame.
pub fn cart_to_spherical(p: &Point3<f64>) -> Result<SphericalPoint> {
    let range = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
    if range == 0.0 {
        return Err(Error::ZeroRange);
    }
    let polar = (p.z / range).clamp(-1.0, 1.0).acos();
    let azimuth = normalize_azimuth(p.y.atan2(p.x));
    Ok(SphericalPoint {
        polar_rad: polar,
        azimuth_rad: azimuth,
        range_m: range,
    })
}

/// Converts a spherical point back to Cartesian coordinates.
pub fn spherical_to_cart(s: &SphericalPoint) -> Point3<f64> {
    let sin_polar = s.polar_rad.sin();
    Point3::new(
        s.range_m * sin_polar * s.azimuth_rad.cos(),
        s.range_m * sin_polar * s.azimuth_rad.sin(),
        s.range_m * s.polar_rad.cos(),
    )
}

/// Unit direction for an (elevation, azimuth) pair.
pub fn direction_from_angles(elevation: f64, azimuth: f64) -> Vector3<f64> {
    let cos_e = elevation.cos();
    Vector3::new(
        cos_e * azimuth.cos(),
        cos_e * azimuth.sin(),
        elevation.sin(),
    )
}

/// Projects a point cloud into a depth image at the sensor's resolution.
///
/// Cell collisions keep the smaller range (nearest surface wins), which makes
/// the result independent of point order. Points outside the FoV are counted
/// and skipped.
pub fn project_to_depth_image(pc: &PointCloud, sensor: &SensorModel) -> Result<Projection> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut image = DepthImage::empty(*sensor);
    let mut out_of_fov = 0usize;
    for p in &pc.points {
        let s = match cart_to_spherical(p) {
            Ok(s) => s,
            Err(_) => {
                out_of_fov += 1;
                continue;
            }
        };
        let (row, col) = match (
            sensor.row_of_elevation(s.elevation_rad()),
            sensor.col_of_azimuth(s.azimuth_rad),
        ) {
            (Some(r), Some(c)) => (r, c),
            _ => {
                out_of_fov += 1;
                continue;
            }
        };
        match image.get(row, col) {
            Some(existing) if existing <= s.range_m => {}
            _ => image.set(row, col, s.range_m),
        }
    }
    Ok(Projection { image, out_of_fov })
}

/// Converts every occupied cell back to a Cartesian point using the
/// cell-center convention.
pub fn unproject_depth_image(img: &DepthImage) -> PointCloud {
    let sensor = &img.sensor;
    let mut points = Vec::with_capacity(img.occupied());
    for (row, col, range) in img.iter_cells() {
        let elevation = sensor.row_elevation(row);
        let azimuth = sensor.col_azimuth(col);
        points.push(spherical_to_cart(&SphericalPoint {
            polar_rad: FRAC_PI_2 - elevation,
            azimuth_rad: azimuth,
            range_m: range,
        }));
    }
    PointCloud {
        points,
        intensity: None,
    }
}
