//! Nearest-neighbor error reports: exact kd-tree distances, the error CDF,
//! and the CSV rendering used by the `eval` subcommand.
//!
//! Run with `cargo run --example evaluate_metrics`.

use curl_codec::geometry::PointCloud;
use curl_codec::metrics::{chamfer_error, nn_error, report_csv};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};

fn main() {
    // ground truth: jittered grid; reconstruction: the same grid nudged 3 cm
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut gt_points = Vec::new();
    for x in 0..20 {
        for y in 0..20 {
            for z in 0..5 {
                gt_points.push(Point3::new(
                    x as f64 + rng.random_range(-0.1..0.1),
                    y as f64 + rng.random_range(-0.1..0.1),
                    z as f64,
                ));
            }
        }
    }
    let gt = PointCloud::from_points(gt_points.clone()).unwrap();
    let recon = PointCloud::from_points(
        gt_points
            .iter()
            .map(|p| Point3::new(p.x + 0.03, p.y, p.z))
            .collect(),
    )
    .unwrap();

    let mut report = nn_error(&recon, &gt).unwrap();
    report.cp_percent = Some(21.5); // as the eval subcommand would fill in
    println!(
        "one-directional: mean {:.4} m, std {:.4} m over {} points",
        report.mean_m, report.std_m, report.point_counts.0
    );
    let roundtrip = chamfer_error(&recon, &gt).unwrap();
    println!(
        "pooled both directions: mean {:.4} m, std {:.4} m",
        roundtrip.mean_m, roundtrip.std_m
    );

    println!("\nCDF (every 10th row of the CSV):");
    let csv = String::from_utf8(report_csv(&report)).unwrap();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 || i % 10 == 0 || i > 100 {
            println!("  {line}");
        }
    }
}
