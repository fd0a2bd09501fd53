//! Cliff-mask denoising on a two-wall scene. Upsampling a scan that jumps
//! between a 5 m and a 50 m wall drags interpolated points across the gap;
//! the cliff grids detect the range discontinuity in the measured image and
//! the mask application removes the interpolated band.
//!
//! Run with `cargo run --example cliff_masks`.

use curl_codec::geometry::{
    direction_from_angles, project_to_depth_image, PointCloud, SensorModel,
};
use curl_codec::masks::{CliffThresholds, MaskSet};
use curl_codec::meshing::mesh_scan;
use curl_codec::sampling::upsample;
use nalgebra::Point3;
use std::f64::consts::{PI, TAU};

fn main() {
    let sensor = SensorModel::new(PI / 4.0, TAU, 32, 256, 1, 2).unwrap();
    let base = sensor.base_resolution();
    let mut points = Vec::new();
    for i in 0..base.rows() {
        for j in 0..base.cols() {
            let azimuth = base.col_azimuth(j);
            let range = if azimuth < PI { 5.0 } else { 50.0 };
            points.push(Point3::from(
                direction_from_angles(base.row_elevation(i), azimuth) * range,
            ));
        }
    }
    let cloud = PointCloud::from_points(points).unwrap();

    let projection = project_to_depth_image(&cloud, &base).unwrap();
    let mesh = mesh_scan(&cloud, &sensor).unwrap();
    let upsampled = upsample(&mesh, &sensor).unwrap();

    let in_gap = |r: f64| r > 7.0 && r < 45.0;
    let before = upsampled
        .iter_cells()
        .filter(|&(_, _, r)| in_gap(r))
        .count();
    println!(
        "upsampled image: {} cells, {} interpolated into the (7, 45) m gap",
        upsampled.occupied(),
        before
    );

    let thresholds = CliffThresholds::new(2.0, 0.2, 2.0).unwrap(); // outdoor
    let (masks, cleaned) = MaskSet::derive(&projection.image, &upsampled, &thresholds).unwrap();
    let after = cleaned.iter_cells().filter(|&(_, _, r)| in_gap(r)).count();
    println!(
        "cliff bits: h={} v={} d={}",
        masks.cliff_h.count_ones(),
        masks.cliff_v.count_ones(),
        masks.cliff_d.count_ones()
    );
    println!(
        "after masks: {} cells survive, gap points {} -> {} ({:.1}% removed)",
        cleaned.occupied(),
        before,
        after,
        100.0 * (before - after) as f64 / before.max(1) as f64
    );
}
