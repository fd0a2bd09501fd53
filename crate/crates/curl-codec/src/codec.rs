//! Patch-based adaptive spherical-harmonics encoding and the binary
//! container format.
//!
//! The upsampled depth image is tiled into small patches. Each patch is
//! fitted at increasing SH degree; training cells (plus a ring of extended
//! cells borrowed from the neighbors) drive the fit while the diagonal
//! testing cells measure generalization. The total error
//! `E_t = alpha * E_a + beta * E_b` uses the Cauchy-style weights
//! `alpha = W`, `beta = 1 - W`, `W = 1 / (1 + (l/k)^2)`, and the search stops
//! once `E_t` drops under the threshold or starts to increase.

use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, TAU};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::geometry::{project_to_depth_image, DepthImage, PointCloud, SensorModel};
use crate::masks::{CliffThresholds, MaskSet};
use crate::meshing::mesh_scan;
use crate::sampling::upsample;
use crate::spharm::{evaluate_one, fit_least_squares, SampleSet, ShCoefficients};

/// Container magic bytes.
pub const CONTAINER_MAGIC: [u8; 4] = *b"CURL";
/// Container format version written by this build.
pub const CONTAINER_VERSION: u16 = 1;
/// Degree byte marking an empty patch.
const EMPTY_PATCH_DEGREE: u8 = 0xFF;
/// Hard cap on the per-patch degree search.
pub const DEGREE_HARD_CAP: usize = 64;

/// Square patch tiling of the upsampled depth image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    /// Patch size in original cells (`P_r`).
    pub patch_size: usize,
    /// Patch height in upsampled pixels (`P_r * S_row`).
    pub patch_rows: usize,
    /// Patch width in upsampled pixels (`P_r * S_col`).
    pub patch_cols: usize,
    /// Extended-ring width in upsampled pixels.
    pub extend: usize,
    /// Patch grid height (last row may shrink).
    pub grid_rows: usize,
    /// Patch grid width (last column may shrink).
    pub grid_cols: usize,
}

impl PatchLayout {
    pub fn new(patch_size: usize, extend: usize, sensor: &SensorModel) -> Result<Self> {
        if patch_size < 1 {
            return Err(Error::InvalidConfig("patch size must be >= 1".into()));
        }
        if patch_size > u16::MAX as usize || extend > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "patch size {patch_size} / extend {extend} exceed {}",
                u16::MAX
            )));
        }
        let patch_rows = patch_size * sensor.row_rate;
        let patch_cols = patch_size * sensor.col_rate;
        Ok(Self {
            patch_size,
            patch_rows,
            patch_cols,
            extend,
            grid_rows: sensor.rows().div_ceil(patch_rows),
            grid_cols: sensor.cols().div_ceil(patch_cols),
        })
    }

    /// Half-open pixel bounds of patch `(pr, pc)`; edge patches shrink to the
    /// image instead of inventing padded pixels.
    pub fn patch_bounds(
        &self,
        pr: usize,
        pc: usize,
        image_rows: usize,
        image_cols: usize,
    ) -> (usize, usize, usize, usize) {
        let r0 = pr * self.patch_rows;
        let c0 = pc * self.patch_cols;
        (
            r0,
            (r0 + self.patch_rows).min(image_rows),
            c0,
            (c0 + self.patch_cols).min(image_cols),
        )
    }

    /// Patch owning an upsampled pixel.
    pub fn patch_of_pixel(&self, row: usize, col: usize) -> (usize, usize) {
        (
            (row / self.patch_rows).min(self.grid_rows - 1),
            (col / self.patch_cols).min(self.grid_cols - 1),
        )
    }

    pub fn patch_count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }
}

/// One encoded patch: either empty or a degree plus its coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum PatchEncoding {
    Empty,
    Fitted(ShCoefficients),
}

impl PatchEncoding {
    pub fn degree(&self) -> Option<usize> {
        match self {
            PatchEncoding::Empty => None,
            PatchEncoding::Fitted(c) => Some(c.degree),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, PatchEncoding::Empty)
    }
}

/// Adaptive degree-search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig {
    /// Kernel pivot `k`; training and testing errors weigh equally at `l = k`.
    pub kernel_pivot: f64,
    /// Stop once the total error drops below this (meters).
    pub error_threshold_m: f64,
    pub degree_min: usize,
    pub degree_max: usize,
}

impl RefinementConfig {
    pub fn new(
        kernel_pivot: f64,
        error_threshold_m: f64,
        degree_min: usize,
        degree_max: usize,
    ) -> Result<Self> {
        if kernel_pivot <= 0.0 {
            return Err(Error::InvalidConfig("kernel pivot must be > 0".into()));
        }
        if degree_min > degree_max {
            return Err(Error::InvalidConfig(format!(
                "degree_min {degree_min} > degree_max {degree_max}"
            )));
        }
        Ok(Self {
            kernel_pivot,
            error_threshold_m,
            degree_min,
            degree_max: degree_max.min(DEGREE_HARD_CAP),
        })
    }
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            kernel_pivot: 9.0,
            error_threshold_m: 0.05,
            degree_min: 0,
            degree_max: DEGREE_HARD_CAP,
        }
    }
}

/// Training/testing weights for degree `l`: `alpha = W`, `beta = 1 - W`,
/// `W = 1 / (1 + (l/k)^2)`.
pub fn refinement_weights(degree: usize, kernel_pivot: f64) -> (f64, f64) {
    let ratio = degree as f64 / kernel_pivot;
    let w = 1.0 / (1.0 + ratio * ratio);
    (w, 1.0 - w)
}

/// Cell partition of one patch. The three sets are disjoint: `training` and
/// `testing` lie inside the patch, `extended` is the ring borrowed from the
/// neighbors. Fits use `training + extended`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchCells {
    pub training: Vec<(usize, usize)>,
    pub testing: Vec<(usize, usize)>,
    pub extended: Vec<(usize, usize)>,
}

/// Splits one patch into training, testing, and extended cells.
///
/// Testing cells sit on the patch diagonal at every other position starting
/// from the patch origin. The extended ring is clamped at the top/bottom
/// image edge and wraps across the azimuth seam for full-circle sensors.
pub fn split_cells(
    layout: &PatchLayout,
    patch_row: usize,
    patch_col: usize,
    image: &DepthImage,
) -> PatchCells {
    let (r0, r1, c0, c1) = layout.patch_bounds(patch_row, patch_col, image.rows(), image.cols());
    let full_circle = (image.sensor.horizontal_fov_rad - TAU).abs() < 1e-9;
    let rows = image.rows();
    let cols = image.cols();

    let mut testing = Vec::new();
    let mut on_diagonal = std::collections::HashSet::new();
    let mut d = 0usize;
    while r0 + d < r1 && c0 + d < c1 {
        testing.push((r0 + d, c0 + d));
        on_diagonal.insert((r0 + d, c0 + d));
        d += 2;
    }

    let mut training = Vec::new();
    for r in r0..r1 {
        for c in c0..c1 {
            if !on_diagonal.contains(&(r, c)) {
                training.push((r, c));
            }
        }
    }

    let mut extended = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let e = layout.extend as isize;
    for r in r0 as isize - e..r1 as isize + e {
        if r < 0 || r >= rows as isize {
            continue;
        }
        for c in c0 as isize - e..c1 as isize + e {
            let cc = if c >= 0 && c < cols as isize {
                c as usize
            } else if full_circle {
                c.rem_euclid(cols as isize) as usize
            } else {
                continue;
            };
            let cell = (r as usize, cc);
            let inside = cell.0 >= r0 && cell.0 < r1 && cell.1 >= c0 && cell.1 < c1;
            if !inside && seen.insert(cell) {
                extended.push(cell);
            }
        }
    }

    PatchCells {
        training,
        testing,
        extended,
    }
}

/// One evaluated degree during the adaptive search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeTrial {
    pub degree: usize,
    pub training_error: f64,
    pub testing_error: f64,
    pub total_error: f64,
}

fn cell_angles(sensor: &SensorModel, cell: (usize, usize)) -> (f64, f64) {
    (
        FRAC_PI_2 - sensor.row_elevation(cell.0),
        sensor.col_azimuth(cell.1),
    )
}

fn gather(img: &DepthImage, cells: &[(usize, usize)]) -> (Vec<(f64, f64)>, Vec<f64>) {
    let mut angles = Vec::new();
    let mut targets = Vec::new();
    for &cell in cells {
        if let Some(range) = img.get(cell.0, cell.1) {
            angles.push(cell_angles(&img.sensor, cell));
            targets.push(range);
        }
    }
    (angles, targets)
}

/// Encodes one patch by the adaptive degree search. Returns the encoding and
/// the trace of evaluated degrees (empty for empty patches).
pub fn encode_patch(
    img: &DepthImage,
    cells: &PatchCells,
    cfg: &RefinementConfig,
) -> Result<(PatchEncoding, Vec<DegreeTrial>)> {
    let (train_angles, train_targets) = gather(img, &cells.training);
    let (ext_angles, ext_targets) = gather(img, &cells.extended);
    let (test_angles, test_targets) = gather(img, &cells.testing);

    let mut fit_angles = train_angles.clone();
    fit_angles.extend_from_slice(&ext_angles);
    let mut fit_targets = train_targets.clone();
    fit_targets.extend_from_slice(&ext_targets);

    if fit_targets.is_empty() {
        return Ok((PatchEncoding::Empty, Vec::new()));
    }
    let samples = SampleSet::new(fit_angles, fit_targets.clone())?;

    // never store more coefficients than fit samples
    let sample_cap = (fit_targets.len() as f64).sqrt().floor() as usize;
    let degree_cap = cfg.degree_max.min(sample_cap.saturating_sub(1));
    if cfg.degree_min > degree_cap {
        return Ok((PatchEncoding::Empty, Vec::new()));
    }

    let mean_abs = |pred: &[f64], actual: &[f64]| -> f64 {
        pred.iter()
            .zip(actual)
            .map(|(p, a)| (p - a).abs())
            .sum::<f64>()
            / actual.len() as f64
    };

    let mut trace = Vec::new();
    let mut best: Option<(f64, ShCoefficients)> = None;
    let mut previous = f64::INFINITY;
    for degree in cfg.degree_min..=degree_cap {
        let (coeffs, fit_residual) = fit_least_squares(&samples, degree)?;
        let training_error = if train_targets.is_empty() {
            fit_residual
        } else {
            let pred: Vec<f64> = train_angles
                .iter()
                .map(|&(p, a)| evaluate_one(&coeffs, p, a))
                .collect();
            mean_abs(&pred, &train_targets)
        };
        let testing_error = if test_targets.is_empty() {
            training_error
        } else {
            let pred: Vec<f64> = test_angles
                .iter()
                .map(|&(p, a)| evaluate_one(&coeffs, p, a))
                .collect();
            mean_abs(&pred, &test_targets)
        };
        let (alpha, beta) = refinement_weights(degree, cfg.kernel_pivot);
        let total_error = alpha * training_error + beta * testing_error;
        trace.push(DegreeTrial {
            degree,
            training_error,
            testing_error,
            total_error,
        });
        if best.as_ref().is_none_or(|(e, _)| total_error < *e) {
            best = Some((total_error, coeffs));
        }
        if total_error < cfg.error_threshold_m || total_error > previous {
            break;
        }
        previous = total_error;
    }

    match best {
        Some((_, coeffs)) => {
            // the container stores f32 coefficients; quantize now so the
            // in-memory encoding equals its serialized round trip and the
            // encoder evaluates exactly what the decoder will see
            let quantized = ShCoefficients::new(
                coeffs.degree,
                coeffs.values.iter().map(|v| *v as f32 as f64).collect(),
            )?;
            Ok((PatchEncoding::Fitted(quantized), trace))
        }
        None => Ok((PatchEncoding::Empty, trace)),
    }
}

/// Everything the encoder needs besides the cloud itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    pub patch_size: usize,
    /// Extended-ring width in upsampled pixels.
    pub extend: usize,
    pub thresholds: CliffThresholds,
    pub refinement: RefinementConfig,
    /// Uncompressed size used for compression reporting; defaults to
    /// 16 bytes per point (x, y, z, intensity as f32).
    pub original_size_bytes: Option<u64>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            patch_size: 4,
            extend: 2,
            thresholds: CliffThresholds {
                horizontal_m: 2.0,
                vertical_m: 0.2,
                diagonal_m: 2.0,
            },
            refinement: RefinementConfig::default(),
            original_size_bytes: None,
        }
    }
}

/// The compressed artifact: sensor metadata, patch layout, per-patch
/// coefficients, and the original-resolution point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurlEncoding {
    pub sensor: SensorModel,
    pub layout: PatchLayout,
    /// Row-major patch grid.
    pub patches: Vec<PatchEncoding>,
    /// Occupancy of the measured (original-resolution) depth image.
    pub point_grid: Bitmap,
    pub thresholds: CliffThresholds,
    pub original_size_bytes: u64,
}

impl CurlEncoding {
    /// Serialized size over original size, as a percentage.
    pub fn compression_percentage(&self) -> f64 {
        compression_percentage(self, self.original_size_bytes)
    }
}

/// Per-stage wall times and counters from one encode run.
#[derive(Debug, Clone, Default)]
pub struct EncodeStats {
    pub points_in: usize,
    pub out_of_fov: usize,
    pub upsampled_cells: usize,
    pub masked_cells: usize,
    pub empty_patches: usize,
    pub mean_degree: f64,
    pub project_time: std::time::Duration,
    pub mesh_time: std::time::Duration,
    pub upsample_time: std::time::Duration,
    pub mask_time: std::time::Duration,
    pub encode_time: std::time::Duration,
}

/// Full encoding pipeline: project, mesh, upsample, mask, patch-encode.
pub fn encode(pc: &PointCloud, sensor: &SensorModel, cfg: &CodecConfig) -> Result<CurlEncoding> {
    encode_with_stats(pc, sensor, cfg).map(|(enc, _)| enc)
}

/// [`encode`] with stage timings and counters.
pub fn encode_with_stats(
    pc: &PointCloud,
    sensor: &SensorModel,
    cfg: &CodecConfig,
) -> Result<(CurlEncoding, EncodeStats)> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut stats = EncodeStats {
        points_in: pc.len(),
        ..Default::default()
    };

    let t = std::time::Instant::now();
    let base = sensor.base_resolution();
    let projection = project_to_depth_image(pc, &base)?;
    stats.out_of_fov = projection.out_of_fov;
    stats.project_time = t.elapsed();

    let t = std::time::Instant::now();
    let mesh = mesh_scan(pc, sensor)?;
    stats.mesh_time = t.elapsed();

    let t = std::time::Instant::now();
    let upsampled = upsample(&mesh, sensor)?;
    stats.upsampled_cells = upsampled.occupied();
    stats.upsample_time = t.elapsed();

    let t = std::time::Instant::now();
    let (masks, cleaned) = MaskSet::derive(&projection.image, &upsampled, &cfg.thresholds)?;
    stats.masked_cells = cleaned.occupied();
    stats.mask_time = t.elapsed();

    let t = std::time::Instant::now();
    let layout = PatchLayout::new(cfg.patch_size, cfg.extend, sensor)?;
    let patches: Vec<PatchEncoding> = (0..layout.patch_count())
        .into_par_iter()
        .map(|idx| {
            let (pr, pc_idx) = (idx / layout.grid_cols, idx % layout.grid_cols);
            let cells = split_cells(&layout, pr, pc_idx, &cleaned);
            encode_patch(&cleaned, &cells, &cfg.refinement).map(|(enc, _)| enc)
        })
        .collect::<Result<_>>()?;
    stats.encode_time = t.elapsed();

    stats.empty_patches = patches.iter().filter(|p| p.is_empty()).count();
    let fitted = patches.len() - stats.empty_patches;
    stats.mean_degree = if fitted == 0 {
        0.0
    } else {
        patches
            .iter()
            .filter_map(|p| p.degree())
            .map(|d| d as f64)
            .sum::<f64>()
            / fitted as f64
    };

    // thresholds pass through the container as f32, so quantize now to make
    // serialization round-trip exactly
    let thresholds = CliffThresholds {
        horizontal_m: cfg.thresholds.horizontal_m as f32 as f64,
        vertical_m: cfg.thresholds.vertical_m as f32 as f64,
        diagonal_m: cfg.thresholds.diagonal_m as f32 as f64,
    };
    let encoding = CurlEncoding {
        sensor: *sensor,
        layout,
        patches,
        point_grid: masks.point_grid,
        thresholds,
        original_size_bytes: cfg.original_size_bytes.unwrap_or(pc.len() as u64 * 16),
    };
    Ok((encoding, stats))
}

/// Compressed size over `original_bytes`, as a percentage.
pub fn compression_percentage(enc: &CurlEncoding, original_bytes: u64) -> f64 {
    serialize(enc).len() as f64 / original_bytes as f64 * 100.0
}

/// Serializes a container (little-endian, CRC32-terminated).
pub fn serialize(enc: &CurlEncoding) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    out.extend_from_slice(&enc.sensor.vertical_fov_rad.to_le_bytes());
    out.extend_from_slice(&enc.sensor.horizontal_fov_rad.to_le_bytes());
    out.extend_from_slice(&(enc.sensor.channels as u16).to_le_bytes());
    out.extend_from_slice(&(enc.sensor.horizontal_bins as u16).to_le_bytes());
    out.extend_from_slice(&(enc.sensor.row_rate as u16).to_le_bytes());
    out.extend_from_slice(&(enc.sensor.col_rate as u16).to_le_bytes());
    out.extend_from_slice(&(enc.layout.patch_size as u16).to_le_bytes());
    out.extend_from_slice(&(enc.layout.extend as u16).to_le_bytes());
    out.extend_from_slice(&(enc.thresholds.horizontal_m as f32).to_le_bytes());
    out.extend_from_slice(&(enc.thresholds.vertical_m as f32).to_le_bytes());
    out.extend_from_slice(&(enc.thresholds.diagonal_m as f32).to_le_bytes());
    out.extend_from_slice(&enc.original_size_bytes.to_le_bytes());
    out.extend_from_slice(&(enc.layout.grid_rows as u32).to_le_bytes());
    out.extend_from_slice(&(enc.layout.grid_cols as u32).to_le_bytes());
    for patch in &enc.patches {
        match patch {
            PatchEncoding::Empty => out.push(EMPTY_PATCH_DEGREE),
            PatchEncoding::Fitted(coeffs) => {
                debug_assert!(coeffs.degree < EMPTY_PATCH_DEGREE as usize);
                out.push(coeffs.degree as u8);
                for v in &coeffs.values {
                    out.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
    }
    let grid_bytes = enc.point_grid.as_bytes();
    out.extend_from_slice(&(grid_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(grid_bytes);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Truncated {
                offset: self.offset,
                needed: n,
            });
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a container. The CRC is verified before anything is interpreted,
/// so any payload corruption is reported as [`Error::ChecksumMismatch`];
/// structural errors only fire on checksum-clean input.
pub fn deserialize(bytes: &[u8]) -> Result<CurlEncoding> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: 8,
        });
    }
    let (payload, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let mut cur = Cursor {
        bytes: payload,
        offset: 0,
    };
    let magic = cur.take(4)?;
    if magic != CONTAINER_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = cur.u16()?;
    if version != CONTAINER_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let vertical_fov = cur.f64()?;
    let horizontal_fov = cur.f64()?;
    let channels = cur.u16()? as usize;
    let bins = cur.u16()? as usize;
    let row_rate = cur.u16()? as usize;
    let col_rate = cur.u16()? as usize;
    let sensor = SensorModel::new(
        vertical_fov,
        horizontal_fov,
        channels,
        bins,
        row_rate,
        col_rate,
    )?;
    let patch_size = cur.u16()? as usize;
    let extend = cur.u16()? as usize;
    let thresholds = CliffThresholds {
        horizontal_m: cur.f32()? as f64,
        vertical_m: cur.f32()? as f64,
        diagonal_m: cur.f32()? as f64,
    };
    let original_size_bytes = cur.u64()?;
    let grid_rows = cur.u32()? as usize;
    let grid_cols = cur.u32()? as usize;
    let layout = PatchLayout::new(patch_size, extend, &sensor)?;
    if layout.grid_rows != grid_rows || layout.grid_cols != grid_cols {
        return Err(Error::InvalidConfig(format!(
            "patch grid {grid_rows}x{grid_cols} inconsistent with sensor-derived \
             {}x{}",
            layout.grid_rows, layout.grid_cols
        )));
    }
    let mut patches = Vec::with_capacity(layout.patch_count());
    for _ in 0..layout.patch_count() {
        let degree = cur.take(1)?[0];
        if degree == EMPTY_PATCH_DEGREE {
            patches.push(PatchEncoding::Empty);
        } else {
            let count = (degree as usize + 1) * (degree as usize + 1);
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                values.push(cur.f32()? as f64);
            }
            patches.push(PatchEncoding::Fitted(ShCoefficients::new(
                degree as usize,
                values,
            )?));
        }
    }
    let grid_len = cur.u32()? as usize;
    let grid_bytes = cur.take(grid_len)?;
    let point_grid = Bitmap::from_bytes(channels, bins, grid_bytes)?;
    if cur.offset != payload.len() {
        return Err(Error::InvalidConfig(format!(
            "{} trailing bytes after point grid",
            payload.len() - cur.offset
        )));
    }
    Ok(CurlEncoding {
        sensor,
        layout,
        patches,
        point_grid,
        thresholds,
        original_size_bytes,
    })
}
