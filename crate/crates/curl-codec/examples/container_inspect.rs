//! The container format up close: serialize an encoding, walk its header,
//! corrupt a byte to trip the checksum, and round-trip it back.
//!
//! Run with `cargo run --example container_inspect`.

use curl_codec::codec::{deserialize, encode, serialize, CodecConfig};
use curl_codec::geometry::{direction_from_angles, PointCloud, SensorModel};
use nalgebra::Point3;
use std::f64::consts::{PI, TAU};

fn main() {
    let sensor = SensorModel::new(PI / 4.0, TAU, 8, 64, 2, 2).unwrap();
    let base = sensor.base_resolution();
    let mut points = Vec::new();
    for i in 0..base.rows() {
        for j in 0..base.cols() {
            points.push(Point3::from(
                direction_from_angles(base.row_elevation(i), base.col_azimuth(j)) * 10.0,
            ));
        }
    }
    let cloud = PointCloud::from_points(points).unwrap();
    let encoding = encode(&cloud, &sensor, &CodecConfig::default()).unwrap();

    let bytes = serialize(&encoding);
    println!("container: {} bytes", bytes.len());
    println!("  magic: {:?}", std::str::from_utf8(&bytes[..4]).unwrap());
    println!(
        "  version: {}",
        u16::from_le_bytes(bytes[4..6].try_into().unwrap())
    );
    println!(
        "  crc32: {:#010x}",
        u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap())
    );
    println!(
        "  patches: {} over a {}x{} grid, point grid {} set bits",
        encoding.patches.len(),
        encoding.layout.grid_rows,
        encoding.layout.grid_cols,
        encoding.point_grid.count_ones()
    );

    // any single corrupted byte is caught before parsing
    let mut corrupted = bytes.clone();
    corrupted[bytes.len() / 3] ^= 0x10;
    match deserialize(&corrupted) {
        Err(e) => println!("corrupted byte detected: {e}"),
        Ok(_) => unreachable!("corruption must not parse"),
    }

    let back = deserialize(&bytes).unwrap();
    assert_eq!(back, encoding);
    println!("round trip: deserialize(serialize(x)) == x");
}
