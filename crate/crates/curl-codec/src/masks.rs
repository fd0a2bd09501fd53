//! Mask bitmaps: the point grid records which cells of the measured depth
//! image hold a return, and the cliff grids mark pixels sitting on sharp
//! range discontinuities. Applying them to an upsampled depth image removes
//! the interpolated points that mesh triangles drag across foreground /
//! background gaps.

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::geometry::DepthImage;
use std::f64::consts::TAU;

/// Per-direction range-jump thresholds in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliffThresholds {
    pub horizontal_m: f64,
    pub vertical_m: f64,
    pub diagonal_m: f64,
}

impl CliffThresholds {
    pub fn new(horizontal_m: f64, vertical_m: f64, diagonal_m: f64) -> Result<Self> {
        if horizontal_m <= 0.0 || vertical_m <= 0.0 || diagonal_m <= 0.0 {
            return Err(Error::InvalidConfig(
                "cliff thresholds must be positive".into(),
            ));
        }
        Ok(Self {
            horizontal_m,
            vertical_m,
            diagonal_m,
        })
    }
}

/// Cliff bitmaps for the three detection directions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliffGrids {
    pub horizontal: Bitmap,
    pub vertical: Bitmap,
    pub diagonal: Bitmap,
}

/// The full mask set: original-resolution grids plus the point grid of the
/// cleaned high-resolution image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    /// Original-resolution occupancy (the only grid persisted in a container).
    pub point_grid: Bitmap,
    pub cliff_h: Bitmap,
    pub cliff_v: Bitmap,
    pub cliff_d: Bitmap,
    /// Occupancy of the masked upsampled image.
    pub hi_res_point_grid: Bitmap,
}

impl MaskSet {
    /// Runs the full mask flow: grids from the measured image, applied to the
    /// upsampled image. Returns the masks together with the cleaned image.
    pub fn derive(
        original: &DepthImage,
        upsampled: &DepthImage,
        thresholds: &CliffThresholds,
    ) -> Result<(MaskSet, DepthImage)> {
        let point_grid = make_point_grid(original);
        let cliffs = make_cliff_grids(original, thresholds);
        let mut masks = MaskSet {
            point_grid,
            cliff_h: cliffs.horizontal,
            cliff_v: cliffs.vertical,
            cliff_d: cliffs.diagonal,
            hi_res_point_grid: Bitmap::zeros(upsampled.rows(), upsampled.cols()),
        };
        let cleaned = apply_masks(upsampled, &masks)?;
        masks.hi_res_point_grid = make_point_grid(&cleaned);
        Ok((masks, cleaned))
    }
}

/// Occupancy bitmap: bit set exactly where the image holds a return.
pub fn make_point_grid(img: &DepthImage) -> Bitmap {
    let mut bm = Bitmap::zeros(img.rows(), img.cols());
    for (r, c, _) in img.iter_cells() {
        bm.set(r, c, true);
    }
    bm
}

/// Detects cliff pixels along the horizontal, vertical, and both diagonal
/// directions. For each adjacent pair of occupied pixels whose ranges differ
/// by more than the direction's threshold, the farther pixel is marked.
/// Pairs with an empty member are skipped. Horizontal and diagonal adjacency
/// wraps across the azimuth seam only for full-circle sensors.
pub fn make_cliff_grids(img: &DepthImage, thresholds: &CliffThresholds) -> CliffGrids {
    let rows = img.rows();
    let cols = img.cols();
    let wrap = (img.sensor.horizontal_fov_rad - TAU).abs() < 1e-9;
    let mut horizontal = Bitmap::zeros(rows, cols);
    let mut vertical = Bitmap::zeros(rows, cols);
    let mut diagonal = Bitmap::zeros(rows, cols);

    let mark = |grid: &mut Bitmap, a: (usize, usize), b: (usize, usize), th: f64| {
        if let (Some(ra), Some(rb)) = (img.get(a.0, a.1), img.get(b.0, b.1)) {
            if (ra - rb).abs() > th {
                let farther = if ra >= rb { a } else { b };
                grid.set(farther.0, farther.1, true);
            }
        }
    };

    for r in 0..rows {
        for c in 0..cols {
            // horizontal neighbor to the right
            if c + 1 < cols {
                mark(&mut horizontal, (r, c), (r, c + 1), thresholds.horizontal_m);
            } else if wrap && cols > 1 {
                mark(&mut horizontal, (r, c), (r, 0), thresholds.horizontal_m);
            }
            if r + 1 < rows {
                // vertical neighbor below
                mark(&mut vertical, (r, c), (r + 1, c), thresholds.vertical_m);
                // down-right diagonal
                if c + 1 < cols {
                    mark(&mut diagonal, (r, c), (r + 1, c + 1), thresholds.diagonal_m);
                } else if wrap && cols > 1 {
                    mark(&mut diagonal, (r, c), (r + 1, 0), thresholds.diagonal_m);
                }
                // down-left diagonal
                if c > 0 {
                    mark(&mut diagonal, (r, c), (r + 1, c - 1), thresholds.diagonal_m);
                } else if wrap && cols > 1 {
                    mark(
                        &mut diagonal,
                        (r, c),
                        (r + 1, cols - 1),
                        thresholds.diagonal_m,
                    );
                }
            }
        }
    }

    CliffGrids {
        horizontal,
        vertical,
        diagonal,
    }
}

/// Original-resolution cell owning fine cell `i` of `fine` (cell-center
/// footprint mapping; plain block replication when `fine` is a multiple).
#[inline]
pub(crate) fn owner_index(orig: usize, fine: usize, i: usize) -> usize {
    (((2 * i as u64 + 1) * orig as u64) / (2 * fine as u64)) as usize
}

/// Removal region implied by the cliff grids: each cliff pixel expanded by
/// one original-resolution pixel along its detection direction, so the whole
/// interpolation zone between the near and far member of a violating pair is
/// covered once blocks are replicated to the upsampled resolution.
pub(crate) fn cliff_removal_grid(masks: &MaskSet, wrap: bool) -> Bitmap {
    let rows = masks.point_grid.rows();
    let cols = masks.point_grid.cols();
    let mut removal = Bitmap::zeros(rows, cols);
    let mut stamp = |r: isize, c: isize| {
        if r < 0 || r >= rows as isize {
            return;
        }
        let c = if wrap {
            c.rem_euclid(cols as isize)
        } else if c < 0 || c >= cols as isize {
            return;
        } else {
            c
        };
        removal.set(r as usize, c as usize, true);
    };
    for r in 0..rows {
        for c in 0..cols {
            let (ri, ci) = (r as isize, c as isize);
            if masks.cliff_h.get(r, c) {
                stamp(ri, ci - 1);
                stamp(ri, ci);
                stamp(ri, ci + 1);
            }
            if masks.cliff_v.get(r, c) {
                stamp(ri - 1, ci);
                stamp(ri, ci);
                stamp(ri + 1, ci);
            }
            if masks.cliff_d.get(r, c) {
                stamp(ri - 1, ci - 1);
                stamp(ri - 1, ci + 1);
                stamp(ri, ci);
                stamp(ri + 1, ci - 1);
                stamp(ri + 1, ci + 1);
            }
        }
    }
    removal
}

/// Removes cells of `img` where the replicated point grid is unset or where
/// the cell falls inside a replicated cliff removal block. Surviving cells
/// are copied unchanged.
pub fn apply_masks(img: &DepthImage, masks: &MaskSet) -> Result<DepthImage> {
    let orig_rows = masks.point_grid.rows();
    let orig_cols = masks.point_grid.cols();
    for grid in [&masks.cliff_h, &masks.cliff_v, &masks.cliff_d] {
        if grid.rows() != orig_rows || grid.cols() != orig_cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{orig_rows}x{orig_cols} cliff grid"),
                actual: format!("{}x{}", grid.rows(), grid.cols()),
            });
        }
    }
    if img.rows() < orig_rows || img.cols() < orig_cols {
        return Err(Error::DimensionMismatch {
            expected: format!("image at least {orig_rows}x{orig_cols}"),
            actual: format!("{}x{}", img.rows(), img.cols()),
        });
    }

    let wrap = (img.sensor.horizontal_fov_rad - TAU).abs() < 1e-9;
    let removal = cliff_removal_grid(masks, wrap);

    let mut out = DepthImage::empty(img.sensor);
    for (r, c, range) in img.iter_cells() {
        let or = owner_index(orig_rows, img.rows(), r);
        let oc = owner_index(orig_cols, img.cols(), c);
        if masks.point_grid.get(or, oc) && !removal.get(or, oc) {
            out.set(r, c, range);
        }
    }
    Ok(out)
}
