//! Full pipeline on a synthetic sphere scan: encode to a container, report
//! the compression percentage, reconstruct 1:1, and measure the radial error.
//!
//! Run with `cargo run --example encode_decode_sphere`.

use curl_codec::codec::{encode_with_stats, serialize, CodecConfig};
use curl_codec::geometry::{direction_from_angles, PointCloud, SensorModel};
use curl_codec::reconstruct::{reconstruct, ReconstructionRequest};
use nalgebra::Point3;
use std::f64::consts::{PI, TAU};

fn main() {
    let radius = 20.0;
    let sensor = SensorModel::new(PI / 3.0, TAU, 64, 512, 2, 2).unwrap();

    // one return per original grid cell, all at 20 m
    let base = sensor.base_resolution();
    let mut points = Vec::new();
    for i in 0..base.rows() {
        for j in 0..base.cols() {
            points.push(Point3::from(
                direction_from_angles(base.row_elevation(i), base.col_azimuth(j)) * radius,
            ));
        }
    }
    let cloud = PointCloud::from_points(points).unwrap();
    println!("input: {} points on a {radius} m sphere", cloud.len());

    let cfg = CodecConfig::default(); // outdoor defaults
    let (encoding, stats) = encode_with_stats(&cloud, &sensor, &cfg).unwrap();
    let bytes = serialize(&encoding);
    println!(
        "encoded: {} patches ({} empty), mean degree {:.2}",
        encoding.layout.patch_count(),
        stats.empty_patches,
        stats.mean_degree
    );
    println!(
        "container: {} bytes vs {} raw -> CP {:.2}%",
        bytes.len(),
        encoding.original_size_bytes,
        encoding.compression_percentage()
    );

    let recon = reconstruct(&encoding, &ReconstructionRequest::default()).unwrap();
    let mean_err = recon
        .points
        .iter()
        .map(|p| (p.coords.norm() - radius).abs())
        .sum::<f64>()
        / recon.len() as f64;
    println!(
        "1:1 reconstruction: {} points, mean radial error {:.4} m",
        recon.len(),
        mean_err
    );
}
