//! Continuous reconstruction: evaluate the stored per-patch coefficients on
//! an arbitrarily fine angle grid, optionally re-apply the masks, and emit a
//! point cloud. One container serves any density multiplier.

use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, TAU};

use crate::codec::CurlEncoding;
use crate::error::{Error, Result};
use crate::geometry::{spherical_to_cart, DepthImage, PointCloud, SensorModel, SphericalPoint};
use crate::masks::{self, make_cliff_grids, MaskSet};
use crate::spharm::evaluate_one;

/// Density request relative to the encoding's upsampled grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionRequest {
    /// Row multiplier, >= 1 (fractional values allowed).
    pub r_row: f64,
    /// Column multiplier, >= 1.
    pub r_col: f64,
    /// Re-apply the stored point grid and recomputed cliff grids.
    pub apply_masks: bool,
}

impl Default for ReconstructionRequest {
    fn default() -> Self {
        Self {
            r_row: 1.0,
            r_col: 1.0,
            apply_masks: true,
        }
    }
}

/// Cell-center angles of the fine reconstruction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FineGrid {
    pub rows: usize,
    pub cols: usize,
    /// Per-row elevation, monotone increasing.
    pub elevations: Vec<f64>,
    /// Per-column azimuth, monotone increasing.
    pub azimuths: Vec<f64>,
}

/// Reconstructed ranges on a fine grid, before Cartesian conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct FineRangeGrid {
    pub grid: FineGrid,
    cells: Vec<Option<f64>>,
}

impl FineRangeGrid {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.grid.cols + col]
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Converts every occupied cell to a Cartesian point.
    pub fn to_point_cloud(&self) -> PointCloud {
        let mut points = Vec::with_capacity(self.occupied());
        for (idx, cell) in self.cells.iter().enumerate() {
            if let Some(range) = cell {
                let (row, col) = (idx / self.grid.cols, idx % self.grid.cols);
                points.push(spherical_to_cart(&SphericalPoint {
                    polar_rad: FRAC_PI_2 - self.grid.elevations[row],
                    azimuth_rad: self.grid.azimuths[col],
                    range_m: *range,
                }));
            }
        }
        PointCloud {
            points,
            intensity: None,
        }
    }
}

/// Builds the fine grid angles for a sensor and a density request.
///
/// Row `i` maps to elevation `(i + 0.5) * theta_v / rows - theta_v / 2` and
/// column `j` to azimuth `(j + 0.5) * theta_h / cols`, with
/// `rows = floor(L * S_row * R_row)` and `cols = floor(N_h * S_col * R_col)`.
pub fn fine_grid_angles(sensor: &SensorModel, req: &ReconstructionRequest) -> Result<FineGrid> {
    if req.r_row < 1.0 || !req.r_row.is_finite() {
        return Err(Error::InvalidMultiplier(req.r_row));
    }
    if req.r_col < 1.0 || !req.r_col.is_finite() {
        return Err(Error::InvalidMultiplier(req.r_col));
    }
    let rows = ((sensor.rows() as f64 * req.r_row + 1e-9).floor() as usize).max(1);
    let cols = ((sensor.cols() as f64 * req.r_col + 1e-9).floor() as usize).max(1);
    let dv = sensor.vertical_fov_rad / rows as f64;
    let dh = sensor.horizontal_fov_rad / cols as f64;
    Ok(FineGrid {
        rows,
        cols,
        elevations: (0..rows)
            .map(|i| (i as f64 + 0.5) * dv - sensor.vertical_fov_rad / 2.0)
            .collect(),
        azimuths: (0..cols).map(|j| (j as f64 + 0.5) * dh).collect(),
    })
}

/// Decoded depth image at the measured (original) resolution with the stored
/// point grid applied. This is the decoder-side stand-in for the original
/// depth image when recomputing cliff grids.
fn decode_base_image(enc: &CurlEncoding) -> DepthImage {
    let base = enc.sensor.base_resolution();
    let mut img = DepthImage::empty(base);
    for r in 0..base.rows() {
        for c in 0..base.cols() {
            if !enc.point_grid.get(r, c) {
                continue;
            }
            let elevation = base.row_elevation(r);
            let azimuth = base.col_azimuth(c);
            let (Some(up_r), Some(up_c)) = (
                enc.sensor.row_of_elevation(elevation),
                enc.sensor.col_of_azimuth(azimuth),
            ) else {
                continue;
            };
            let (pr, pc) = enc.layout.patch_of_pixel(up_r, up_c);
            if let crate::codec::PatchEncoding::Fitted(coeffs) =
                &enc.patches[pr * enc.layout.grid_cols + pc]
            {
                let range = evaluate_one(coeffs, FRAC_PI_2 - elevation, azimuth);
                if range.is_finite() && range > 0.0 {
                    img.set(r, c, range);
                }
            }
        }
    }
    img
}

/// Evaluates the encoding on the fine grid. Cells of empty patches stay
/// empty; masks are applied afterwards when requested.
pub fn reconstruct_grid(enc: &CurlEncoding, req: &ReconstructionRequest) -> Result<FineRangeGrid> {
    let sensor = &enc.sensor;
    let grid = fine_grid_angles(sensor, req)?;
    let up_rows = sensor.rows();
    let up_cols = sensor.cols();

    let cells: Vec<Option<f64>> = (0..grid.rows)
        .into_par_iter()
        .flat_map_iter(|i| {
            let elevation = grid.elevations[i];
            let polar = FRAC_PI_2 - elevation;
            let up_r = masks::owner_index(up_rows, grid.rows, i);
            let grid_ref = &grid;
            (0..grid_ref.cols).map(move |j| {
                let azimuth = grid_ref.azimuths[j];
                let up_c = masks::owner_index(up_cols, grid_ref.cols, j);
                let (pr, pc) = enc.layout.patch_of_pixel(up_r, up_c);
                match &enc.patches[pr * enc.layout.grid_cols + pc] {
                    crate::codec::PatchEncoding::Empty => None,
                    crate::codec::PatchEncoding::Fitted(coeffs) => {
                        let range = evaluate_one(coeffs, polar, azimuth);
                        (range.is_finite() && range > 0.0).then_some(range)
                    }
                }
            })
        })
        .collect();

    let mut out = FineRangeGrid { grid, cells };

    if req.apply_masks {
        let base_image = decode_base_image(enc);
        let cliffs = make_cliff_grids(&base_image, &enc.thresholds);
        let mask_set = MaskSet {
            point_grid: enc.point_grid.clone(),
            cliff_h: cliffs.horizontal,
            cliff_v: cliffs.vertical,
            cliff_d: cliffs.diagonal,
            hi_res_point_grid: crate::bitmap::Bitmap::zeros(0, 0),
        };
        let wrap = (sensor.horizontal_fov_rad - TAU).abs() < 1e-9;
        let removal = masks::cliff_removal_grid(&mask_set, wrap);
        let orig_rows = sensor.channels;
        let orig_cols = sensor.horizontal_bins;
        for i in 0..out.grid.rows {
            let or = masks::owner_index(orig_rows, out.grid.rows, i);
            for j in 0..out.grid.cols {
                let oc = masks::owner_index(orig_cols, out.grid.cols, j);
                if !mask_set.point_grid.get(or, oc) || removal.get(or, oc) {
                    out.cells[i * out.grid.cols + j] = None;
                }
            }
        }
    }
    Ok(out)
}

/// Full decode: fine-grid evaluation, optional masking, Cartesian output.
pub fn reconstruct(enc: &CurlEncoding, req: &ReconstructionRequest) -> Result<PointCloud> {
    Ok(reconstruct_grid(enc, req)?.to_point_cloud())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, CodecConfig, PatchEncoding};
    use crate::geometry::direction_from_angles;
    use approx::assert_relative_eq;
    use nalgebra::Point3;
    use std::f64::consts::PI;

    fn sphere_setup() -> &'static (SensorModel, CurlEncoding) {
        // fine enough angular resolution that chord sagitta and the
        // convex-closure cap below the bottom ring stay small
        static SETUP: std::sync::OnceLock<(SensorModel, CurlEncoding)> = std::sync::OnceLock::new();
        SETUP.get_or_init(|| {
            let sensor = SensorModel::new(PI / 3.0, TAU, 64, 256, 2, 2).unwrap();
            let base = sensor.base_resolution();
            let mut points = Vec::new();
            for i in 0..base.rows() {
                for j in 0..base.cols() {
                    points.push(Point3::from(
                        direction_from_angles(base.row_elevation(i), base.col_azimuth(j)) * 20.0,
                    ));
                }
            }
            let cloud = crate::geometry::PointCloud::from_points(points).unwrap();
            let enc = encode(&cloud, &sensor, &CodecConfig::default()).unwrap();
            (sensor, enc)
        })
    }

    /// Distance from `p` to the boundary of an axis-aligned box centered at
    /// the origin with half-extents `h`.
    fn distance_to_box_surface(p: &Point3<f64>, h: [f64; 3]) -> f64 {
        let inside = (0..3).all(|k| p[k].abs() <= h[k]);
        if inside {
            (0..3)
                .map(|k| h[k] - p[k].abs())
                .fold(f64::INFINITY, f64::min)
        } else {
            let mut d2 = 0.0;
            for k in 0..3 {
                let excess = (p[k].abs() - h[k]).max(0.0);
                d2 += excess * excess;
            }
            d2.sqrt()
        }
    }

    /// Smallest positive ray parameter where `dir` from the origin exits the
    /// box with half-extents `h`.
    fn ray_box_exit(dir: &nalgebra::Vector3<f64>, h: [f64; 3]) -> f64 {
        let mut t = f64::INFINITY;
        for k in 0..3 {
            if dir[k].abs() > 1e-12 {
                let plane = if dir[k] > 0.0 { h[k] } else { -h[k] };
                t = t.min(plane / dir[k]);
            }
        }
        t
    }

    #[test]
    fn indoor_room_dense_reconstruction() {
        // 10 x 10 x 4 m room scanned from its center with a wide vertical
        // FoV, so the bottom ring lands on the floor; indoor thresholds,
        // patch size 4, rate 2, then a 2x-denser row reconstruction. The
        // oracle is the analytic distance to the box surface.
        let half = [5.0, 5.0, 2.0];
        let sensor = SensorModel::new(PI / 2.0, TAU, 64, 512, 2, 2).unwrap();
        let base = sensor.base_resolution();
        let mut points = Vec::new();
        for i in 0..base.rows() {
            for j in 0..base.cols() {
                let dir = direction_from_angles(base.row_elevation(i), base.col_azimuth(j));
                points.push(Point3::from(dir * ray_box_exit(&dir, half)));
            }
        }
        let cloud = crate::geometry::PointCloud::from_points(points).unwrap();

        let cfg = CodecConfig {
            thresholds: crate::masks::CliffThresholds::new(0.1, 0.1, 0.1414).unwrap(),
            refinement: crate::codec::RefinementConfig::new(9.0, 0.01, 0, 64).unwrap(),
            ..CodecConfig::default()
        };
        let enc = encode(&cloud, &sensor, &cfg).unwrap();
        let out = reconstruct(
            &enc,
            &ReconstructionRequest {
                r_row: 2.0,
                r_col: 1.0,
                apply_masks: true,
            },
        )
        .unwrap();
        assert!(out.len() > cloud.len());
        let mean = out
            .points
            .iter()
            .map(|p| distance_to_box_surface(p, half))
            .sum::<f64>()
            / out.len() as f64;
        assert!(
            mean <= 0.01,
            "mean surface distance {mean} m exceeds 0.01 m"
        );
    }

    #[test]
    fn fine_grid_matches_upsampled_centers_at_unit_rate() {
        let sensor = SensorModel::new(PI / 3.0, TAU, 8, 32, 2, 2).unwrap();
        let req = ReconstructionRequest {
            r_row: 1.0,
            r_col: 1.0,
            apply_masks: false,
        };
        let grid = fine_grid_angles(&sensor, &req).unwrap();
        assert_eq!(grid.rows, sensor.rows());
        assert_eq!(grid.cols, sensor.cols());
        for (i, e) in grid.elevations.iter().enumerate() {
            assert_relative_eq!(*e, sensor.row_elevation(i), max_relative = 1e-12);
        }
        for (j, a) in grid.azimuths.iter().enumerate() {
            assert_relative_eq!(*a, sensor.col_azimuth(j), max_relative = 1e-12);
        }
    }

    #[test]
    fn doubling_col_rate_halves_spacing() {
        let sensor = SensorModel::new(PI / 3.0, TAU, 8, 32, 2, 2).unwrap();
        let g1 = fine_grid_angles(
            &sensor,
            &ReconstructionRequest {
                r_row: 1.0,
                r_col: 1.0,
                apply_masks: false,
            },
        )
        .unwrap();
        let g2 = fine_grid_angles(
            &sensor,
            &ReconstructionRequest {
                r_row: 1.0,
                r_col: 2.0,
                apply_masks: false,
            },
        )
        .unwrap();
        let s1 = g1.azimuths[1] - g1.azimuths[0];
        let s2 = g2.azimuths[1] - g2.azimuths[0];
        assert_relative_eq!(s2, s1 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn elevations_symmetric_for_centered_fov() {
        let sensor = SensorModel::new(PI / 3.0, TAU, 8, 32, 2, 2).unwrap();
        let grid = fine_grid_angles(&sensor, &ReconstructionRequest::default()).unwrap();
        assert_relative_eq!(
            grid.elevations[0],
            -grid.elevations[grid.rows - 1],
            max_relative = 1e-12
        );
    }

    #[test]
    fn rejects_sub_unit_multipliers() {
        let sensor = SensorModel::new(PI / 3.0, TAU, 8, 32, 2, 2).unwrap();
        let req = ReconstructionRequest {
            r_row: 0.5,
            r_col: 1.0,
            apply_masks: false,
        };
        assert!(matches!(
            fine_grid_angles(&sensor, &req),
            Err(Error::InvalidMultiplier(_))
        ));
    }

    #[test]
    fn sphere_round_trip_error_small() {
        let (_, enc) = sphere_setup();
        let cloud = reconstruct(enc, &ReconstructionRequest::default()).unwrap();
        assert!(!cloud.is_empty());
        let mean: f64 = cloud
            .points
            .iter()
            .map(|p| (p.coords.norm() - 20.0).abs())
            .sum::<f64>()
            / cloud.len() as f64;
        assert!(mean < 0.02, "mean radial error {mean}");
    }

    #[test]
    fn unit_rate_matches_per_cell_evaluation() {
        let (_, enc) = sphere_setup();
        let req = ReconstructionRequest {
            r_row: 1.0,
            r_col: 1.0,
            apply_masks: false,
        };
        let grid = reconstruct_grid(enc, &req).unwrap();
        for i in 0..grid.grid.rows {
            for j in 0..grid.grid.cols {
                let (pr, pc) = enc.layout.patch_of_pixel(i, j);
                let expected = match &enc.patches[pr * enc.layout.grid_cols + pc] {
                    PatchEncoding::Empty => None,
                    PatchEncoding::Fitted(c) => {
                        let v = evaluate_one(
                            c,
                            FRAC_PI_2 - grid.grid.elevations[i],
                            grid.grid.azimuths[j],
                        );
                        (v.is_finite() && v > 0.0).then_some(v)
                    }
                };
                assert_eq!(grid.get(i, j), expected, "cell ({i},{j})");
            }
        }
    }

    #[test]
    fn density_scales_with_row_multiplier() {
        let (_, enc) = sphere_setup();
        let base = reconstruct(enc, &ReconstructionRequest::default()).unwrap();
        let denser = reconstruct(
            enc,
            &ReconstructionRequest {
                r_row: 2.0,
                r_col: 1.0,
                apply_masks: true,
            },
        )
        .unwrap();
        assert!(
            denser.len() as f64 >= 1.5 * base.len() as f64,
            "{} vs {}",
            denser.len(),
            base.len()
        );
    }

    #[test]
    fn masked_output_subset_of_unmasked() {
        let (_, enc) = sphere_setup();
        let with = reconstruct_grid(
            enc,
            &ReconstructionRequest {
                r_row: 2.0,
                r_col: 1.0,
                apply_masks: true,
            },
        )
        .unwrap();
        let without = reconstruct_grid(
            enc,
            &ReconstructionRequest {
                r_row: 2.0,
                r_col: 1.0,
                apply_masks: false,
            },
        )
        .unwrap();
        for i in 0..with.grid.rows {
            for j in 0..with.grid.cols {
                if let Some(r) = with.get(i, j) {
                    assert_eq!(without.get(i, j), Some(r));
                }
            }
        }
    }

    #[test]
    fn nearby_angles_give_nearby_ranges() {
        // density-continuity smoke test: a 4x-denser grid's cells differ from
        // the coarse cell of the same patch by O(angle gap)
        let (sensor, enc) = sphere_setup();
        let coarse = reconstruct_grid(
            enc,
            &ReconstructionRequest {
                r_row: 1.0,
                r_col: 1.0,
                apply_masks: false,
            },
        )
        .unwrap();
        let dense = reconstruct_grid(
            enc,
            &ReconstructionRequest {
                r_row: 4.0,
                r_col: 1.0,
                apply_masks: false,
            },
        )
        .unwrap();
        let up_rows = sensor.rows();
        for i in (0..dense.grid.rows).step_by(7) {
            let ci = crate::masks::owner_index(coarse.grid.rows, dense.grid.rows, i);
            let owner_dense = enc
                .layout
                .patch_of_pixel(crate::masks::owner_index(up_rows, dense.grid.rows, i), 0);
            let owner_coarse = enc.layout.patch_of_pixel(ci, 0);
            if owner_dense != owner_coarse {
                continue; // no cross-patch smoothness guarantee
            }
            for j in (0..dense.grid.cols).step_by(11) {
                if let (Some(a), Some(b)) = (dense.get(i, j), coarse.get(ci, j)) {
                    assert!((a - b).abs() < 0.05, "cell ({i},{j}): {a} vs coarse {b}");
                }
            }
        }
    }

    #[test]
    fn no_patch_bleed() {
        let (_, enc) = sphere_setup();
        let req = ReconstructionRequest {
            r_row: 1.0,
            r_col: 1.0,
            apply_masks: false,
        };
        let before = reconstruct_grid(enc, &req).unwrap();

        // perturb one fitted patch
        let mut modified = enc.clone();
        let target = modified
            .patches
            .iter()
            .position(|p| !p.is_empty())
            .expect("needs a fitted patch");
        if let PatchEncoding::Fitted(c) = &mut modified.patches[target] {
            c.values[0] += 1.0;
        }
        let after = reconstruct_grid(&modified, &req).unwrap();

        let (tpr, tpc) = (target / enc.layout.grid_cols, target % enc.layout.grid_cols);
        let mut changed_inside = 0usize;
        for i in 0..before.grid.rows {
            for j in 0..before.grid.cols {
                let owner = enc.layout.patch_of_pixel(i, j);
                let same = before.get(i, j) == after.get(i, j);
                if owner == (tpr, tpc) {
                    if !same {
                        changed_inside += 1;
                    }
                } else {
                    assert!(same, "cell ({i},{j}) outside patch changed");
                }
            }
        }
        assert!(changed_inside > 0, "perturbation must be visible");
    }
}
