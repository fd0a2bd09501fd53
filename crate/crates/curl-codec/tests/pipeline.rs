//! End-to-end tests of the `curl-codec` binary: pipeline round trips,
//! determinism across runs and thread counts, exit codes, and the stats
//! contract of each subcommand.

use curl_codec::geometry::{direction_from_angles, SensorModel};
use nalgebra::Point3;
use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_curl-codec")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("failed to spawn curl-codec")
}

fn stdout_field(output: &Output, key: &str) -> String {
    let text = String::from_utf8_lossy(&output.stdout);
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix(&format!("{key}: ")) {
            return rest.to_string();
        }
    }
    panic!("stdout lacks '{key}:' line; got:\n{text}");
}

/// Sphere scan as a KITTI-style .bin file; returns the sensor used.
fn write_sphere_bin(path: &Path, channels: usize, bins: usize, radius: f64) -> SensorModel {
    let sensor = SensorModel::new(PI / 3.0, TAU, channels, bins, 2, 2).unwrap();
    let base = sensor.base_resolution();
    let mut bytes = Vec::new();
    for i in 0..base.rows() {
        for j in 0..base.cols() {
            let p = Point3::from(
                direction_from_angles(base.row_elevation(i), base.col_azimuth(j)) * radius,
            );
            for v in [p.x as f32, p.y as f32, p.z as f32, 0.5f32] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    std::fs::write(path, bytes).unwrap();
    sensor
}

struct Scene {
    dir: tempfile::TempDir,
    input: PathBuf,
}

fn sphere_scene() -> Scene {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("scan.bin");
    write_sphere_bin(&input, 32, 256, 20.0);
    Scene { dir, input }
}

const SPHERE_FLAGS: &[&str] = &["--channels", "32", "--bins", "256", "--vfov-deg", "60"];

#[test]
fn full_pipeline_encode_reconstruct_eval() {
    let scene = sphere_scene();
    let container = scene.dir.path().join("scan.curl");
    let recon = scene.dir.path().join("recon.bin");
    let csv = scene.dir.path().join("report.csv");

    // encode
    let mut args = vec![
        "encode",
        "-i",
        scene.input.to_str().unwrap(),
        "-o",
        container.to_str().unwrap(),
        "--profile",
        "outdoor",
    ];
    args.extend_from_slice(SPHERE_FLAGS);
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // printed CP must equal the ratio of the on-disk sizes exactly
    let container_size = std::fs::metadata(&container).unwrap().len();
    let original_size = std::fs::metadata(&scene.input).unwrap().len();
    let expected_cp = container_size as f64 / original_size as f64 * 100.0;
    let printed_cp: f64 = stdout_field(&out, "cp_percent").parse().unwrap();
    assert_eq!(printed_cp, expected_cp);
    assert_eq!(
        stdout_field(&out, "points_in").parse::<usize>().unwrap(),
        32 * 256
    );

    // stage timings must account for (almost) the whole wall time
    let stage_line = stdout_field(&out, "stage_ms");
    let stage_sum: f64 = stage_line
        .split_whitespace()
        .map(|part| part.split('=').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    let total: f64 = stdout_field(&out, "total_ms").parse().unwrap();
    assert!(
        (total - stage_sum).abs() <= 0.05 * total + 2.0,
        "stages sum to {stage_sum} ms but total is {total} ms"
    );

    // reconstruct 1:1
    let out = run(&[
        "reconstruct",
        "-i",
        container.to_str().unwrap(),
        "-o",
        recon.to_str().unwrap(),
        "--r-row",
        "1",
        "--r-col",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let points_out: usize = stdout_field(&out, "points_out").parse().unwrap();
    assert!(points_out > 0);

    // eval against the original. The R=1 grid is 2x denser than the 32-channel
    // scan, so the mean NN distance is dominated by the angular offset of the
    // in-between points (~20 m * 0.9 deg), not by range error; the threshold
    // reflects that floor.
    let out = run(&[
        "eval",
        "--recon",
        recon.to_str().unwrap(),
        "--gt",
        scene.input.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--curl",
        container.to_str().unwrap(),
        "--max-mean",
        "0.5",
        "--max-cp",
        "100",
    ]);
    assert!(
        out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let printed_mean: f64 = stdout_field(&out, "mean_m").parse().unwrap();
    let report = curl_codec::metrics::parse_report_csv(&std::fs::read(&csv).unwrap()).unwrap();
    assert_eq!(report.mean_m, printed_mean);
    assert_eq!(report.cdf.len(), 100);
}

#[test]
fn encode_is_deterministic_across_runs_and_threads() {
    let scene = sphere_scene();
    let out_a = scene.dir.path().join("a.curl");
    let out_b = scene.dir.path().join("b.curl");
    for (path, threads) in [(&out_a, "1"), (&out_b, "8")] {
        let mut args = vec![
            "encode",
            "-i",
            scene.input.to_str().unwrap(),
            "-o",
            path.to_str().unwrap(),
            "--threads",
            threads,
        ];
        args.extend_from_slice(SPHERE_FLAGS);
        let out = run(&args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "containers differ between 1 and 8 worker threads");
}

#[test]
fn one_container_serves_multiple_densities() {
    let scene = sphere_scene();
    let container = scene.dir.path().join("scan.curl");
    let mut args = vec![
        "encode",
        "-i",
        scene.input.to_str().unwrap(),
        "-o",
        container.to_str().unwrap(),
    ];
    args.extend_from_slice(SPHERE_FLAGS);
    assert!(run(&args).status.success());

    let mut counts = Vec::new();
    for r_row in ["2", "7"] {
        let out_path = scene.dir.path().join(format!("r{r_row}.bin"));
        let out = run(&[
            "reconstruct",
            "-i",
            container.to_str().unwrap(),
            "-o",
            out_path.to_str().unwrap(),
            "--r-row",
            r_row,
        ]);
        assert!(out.status.success(), "r_row={r_row} failed");
        counts.push(stdout_field(&out, "points_out").parse::<usize>().unwrap());
    }
    assert!(counts[1] > counts[0], "7x must emit more points than 2x");
}

#[test]
fn eval_threshold_violation_exits_3() {
    let scene = sphere_scene();
    // shift the cloud by 1 m so the mean error is far over the threshold
    let shifted = scene.dir.path().join("shifted.bin");
    let cloud = curl_codec::io::read_pointcloud(&scene.input).unwrap();
    let moved = curl_codec::geometry::PointCloud::new(
        cloud
            .points
            .iter()
            .map(|p| Point3::new(p.x + 1.0, p.y, p.z))
            .collect(),
        cloud.intensity.clone(),
    )
    .unwrap();
    curl_codec::io::write_pointcloud(&shifted, &moved, curl_codec::io::CloudFormat::KittiBin)
        .unwrap();

    let out = run(&[
        "eval",
        "--recon",
        shifted.to_str().unwrap(),
        "--gt",
        scene.input.to_str().unwrap(),
        "--max-mean",
        "0.01",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_format_flag_exits_2_with_usage() {
    let scene = sphere_scene();
    let container = scene.dir.path().join("scan.curl");
    let mut args = vec![
        "encode",
        "-i",
        scene.input.to_str().unwrap(),
        "-o",
        container.to_str().unwrap(),
    ];
    args.extend_from_slice(SPHERE_FLAGS);
    assert!(run(&args).status.success());

    let out = run(&[
        "reconstruct",
        "-i",
        container.to_str().unwrap(),
        "-o",
        scene.dir.path().join("out.bin").to_str().unwrap(),
        "--format",
        "laserdisc",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("usage"));
}

#[test]
fn empty_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.bin");
    std::fs::write(&empty, []).unwrap();
    let out = run(&[
        "encode",
        "-i",
        empty.to_str().unwrap(),
        "-o",
        dir.path().join("out.curl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty point cloud"));
}

#[test]
fn corrupted_container_reports_checksum() {
    let scene = sphere_scene();
    let container = scene.dir.path().join("scan.curl");
    let mut args = vec![
        "encode",
        "-i",
        scene.input.to_str().unwrap(),
        "-o",
        container.to_str().unwrap(),
    ];
    args.extend_from_slice(SPHERE_FLAGS);
    assert!(run(&args).status.success());

    let mut bytes = std::fs::read(&container).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xA5;
    std::fs::write(&container, bytes).unwrap();

    let out = run(&[
        "reconstruct",
        "-i",
        container.to_str().unwrap(),
        "-o",
        scene.dir.path().join("out.bin").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn info_prints_json_lines() {
    let scene = sphere_scene();
    let container = scene.dir.path().join("scan.curl");
    let mut args = vec![
        "encode",
        "-i",
        scene.input.to_str().unwrap(),
        "-o",
        container.to_str().unwrap(),
    ];
    args.extend_from_slice(SPHERE_FLAGS);
    assert!(run(&args).status.success());

    let out = run(&["info", container.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut saw_sensor = false;
    for line in text.lines() {
        let value: serde_json::Value =
            serde_json::from_str(line).unwrap_or_else(|e| panic!("bad JSON line '{line}': {e}"));
        assert!(value.is_object());
        if value.get("sensor").is_some() {
            saw_sensor = true;
            assert_eq!(value["sensor"]["channels"], 32);
            assert_eq!(value["sensor"]["row_rate"], 2);
        }
    }
    assert!(saw_sensor, "info must dump the sensor block");
}

#[test]
fn upsample_standalone_with_mesh_export() {
    let scene = sphere_scene();
    let output = scene.dir.path().join("dense.ply");
    let mesh_path = scene.dir.path().join("mesh.ply");
    let mut args = vec![
        "upsample",
        "-i",
        scene.input.to_str().unwrap(),
        "-o",
        output.to_str().unwrap(),
        "--export-mesh",
        mesh_path.to_str().unwrap(),
    ];
    args.extend_from_slice(SPHERE_FLAGS);
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let points_in: usize = stdout_field(&out, "points_in").parse().unwrap();
    let points_out: usize = stdout_field(&out, "points_out").parse().unwrap();
    assert!(
        points_out > 2 * points_in,
        "rate-2 upsampling should grow the cloud: {points_in} -> {points_out}"
    );
    let dense = curl_codec::io::read_pointcloud(&output).unwrap();
    assert_eq!(dense.len(), points_out);
    let mesh_text = std::fs::read_to_string(&mesh_path).unwrap();
    assert!(mesh_text.starts_with("ply"));
    assert!(mesh_text.contains("element face"));
}

#[test]
fn config_file_layered_under_flags() {
    let scene = sphere_scene();
    let cfg_path = scene.dir.path().join("params.cfg");
    // config file sets coarse rates; the explicit flag must win for s-col
    std::fs::write(&cfg_path, "s-row = 1\ns-col = 1\nvfov-deg = 60\n").unwrap();
    let container = scene.dir.path().join("scan.curl");
    let out = run(&[
        "encode",
        "-i",
        scene.input.to_str().unwrap(),
        "-o",
        container.to_str().unwrap(),
        "--config",
        cfg_path.to_str().unwrap(),
        "--channels",
        "32",
        "--bins",
        "256",
        "--s-col",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let info = run(&["info", container.to_str().unwrap()]);
    let text = String::from_utf8(info.stdout).unwrap();
    let sensor_line = text
        .lines()
        .find(|l| l.contains("\"sensor\""))
        .expect("sensor line");
    let value: serde_json::Value = serde_json::from_str(sensor_line).unwrap();
    assert_eq!(value["sensor"]["row_rate"], 1, "config file applies");
    assert_eq!(value["sensor"]["col_rate"], 2, "flag overrides config file");
}
