//! One container, many densities: reconstruct the same encoding at several
//! row multipliers, including a fractional one, and watch the point count
//! scale while the error stays flat.
//!
//! Run with `cargo run --example continuous_density`.

use curl_codec::codec::{encode, serialize, CodecConfig};
use curl_codec::geometry::{direction_from_angles, PointCloud, SensorModel};
use curl_codec::reconstruct::{reconstruct, ReconstructionRequest};
use nalgebra::Point3;
use std::f64::consts::{PI, TAU};

fn main() {
    let radius = 15.0;
    let sensor = SensorModel::new(PI / 3.0, TAU, 64, 512, 2, 2).unwrap();
    let base = sensor.base_resolution();
    let mut points = Vec::new();
    for i in 0..base.rows() {
        for j in 0..base.cols() {
            let azimuth = base.col_azimuth(j);
            let range = radius + 1.0 * (4.0 * azimuth).sin();
            points.push(Point3::from(
                direction_from_angles(base.row_elevation(i), azimuth) * range,
            ));
        }
    }
    let cloud = PointCloud::from_points(points).unwrap();
    let encoding = encode(&cloud, &sensor, &CodecConfig::default()).unwrap();
    println!(
        "one container: {} bytes for {} input points",
        serialize(&encoding).len(),
        cloud.len()
    );

    for r_row in [1.0, 1.5, 2.0, 4.0, 7.0] {
        let out = reconstruct(
            &encoding,
            &ReconstructionRequest {
                r_row,
                r_col: 1.0,
                apply_masks: true,
            },
        )
        .unwrap();
        // radial error against the analytic surface
        let mean_err = out
            .points
            .iter()
            .map(|p| {
                let azimuth = p.y.atan2(p.x).rem_euclid(TAU);
                let expected = radius + 1.0 * (4.0 * azimuth).sin();
                (p.coords.norm() - expected).abs()
            })
            .sum::<f64>()
            / out.len() as f64;
        println!(
            "R_row = {r_row:>3}: {:>7} points, mean surface error {:.4} m",
            out.len(),
            mean_err
        );
    }
}
