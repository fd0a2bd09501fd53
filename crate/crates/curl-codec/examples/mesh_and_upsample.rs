//! Polar-parametrized meshing and virtual-grid upsampling, standalone.
//! Writes the intermediate mesh and the densified cloud next to the system
//! temp directory so they can be opened in any PLY viewer.
//!
//! Run with `cargo run --example mesh_and_upsample`.

use curl_codec::geometry::{direction_from_angles, unproject_depth_image, PointCloud, SensorModel};
use curl_codec::io::{write_mesh_ply, write_pointcloud, CloudFormat};
use curl_codec::meshing::{build_polar_grid, delaunay_2d};
use curl_codec::sampling::upsample;
use nalgebra::Point3;
use std::f64::consts::{PI, TAU};

fn main() {
    // a wavy "terrain" scan: range modulated over azimuth and elevation
    let sensor = SensorModel::new(PI / 4.0, TAU, 32, 360, 2, 2).unwrap();
    let base = sensor.base_resolution();
    let mut points = Vec::new();
    for i in 0..base.rows() {
        for j in 0..base.cols() {
            let elevation = base.row_elevation(i);
            let azimuth = base.col_azimuth(j);
            let range = 12.0 + 2.0 * (3.0 * azimuth).sin() + 1.5 * (8.0 * elevation).cos();
            points.push(Point3::from(
                direction_from_angles(elevation, azimuth) * range,
            ));
        }
    }
    let cloud = PointCloud::from_points(points).unwrap();

    let grid = build_polar_grid(&cloud, &sensor).unwrap();
    println!(
        "polar grid: {} vertices across {} channels",
        grid.len(),
        grid.channel.iter().max().unwrap()
    );

    let mesh = delaunay_2d(&grid).unwrap();
    println!("mesh: {} triangles", mesh.triangles.len());

    let image = upsample(&mesh, &sensor).unwrap();
    println!(
        "upsampled: {} / {} cells hit",
        image.occupied(),
        image.rows() * image.cols()
    );

    let dense = unproject_depth_image(&image);
    let dir = std::env::temp_dir();
    let mesh_path = dir.join("curl_example_mesh.ply");
    let cloud_path = dir.join("curl_example_dense.ply");
    write_mesh_ply(&mesh_path, &mesh).unwrap();
    write_pointcloud(&cloud_path, &dense, CloudFormat::PlyBinary).unwrap();
    println!("wrote {} and {}", mesh_path.display(), cloud_path.display());
}
