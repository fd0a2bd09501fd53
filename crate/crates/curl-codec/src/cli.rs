//! Command-line front end: `encode`, `reconstruct`, `upsample`, `eval`, and
//! `info` subcommands wiring the pipeline together.
//!
//! Exit codes: 0 on success, 1 on input or pipeline errors, 2 on usage
//! errors, 3 when `eval` thresholds are violated.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::codec::{self, CurlEncoding};
use crate::config::{Config, Profile};
use crate::error::{Error, Result};
use crate::geometry::{cart_to_spherical, unproject_depth_image, PointCloud};
use crate::io::{read_pointcloud, write_mesh_ply, write_pointcloud, CloudFormat};
use crate::masks::MaskSet;
use crate::meshing::mesh_scan;
use crate::metrics;
use crate::reconstruct::{reconstruct, ReconstructionRequest};
use crate::sampling::upsample;

#[derive(Parser)]
#[command(
    name = "curl-codec",
    version,
    about = "Spherical-harmonics LiDAR point cloud codec"
)]
pub struct Cli {
    /// Worker threads (default: all cores). Results are identical for any
    /// thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a point cloud into a .curl container.
    Encode(EncodeArgs),
    /// Reconstruct a point cloud from a container at any density.
    Reconstruct(ReconstructArgs),
    /// Mesh + ray-cast + mask a scan without encoding it.
    Upsample(UpsampleArgs),
    /// Nearest-neighbor error report between two clouds.
    Eval(EvalArgs),
    /// Dump a container header as JSON lines.
    Info(InfoArgs),
}

/// Sensor and codec tuning shared by encode/upsample. Precedence:
/// built-in defaults < profile < config file < flags.
#[derive(Args, Debug, Default, Clone)]
struct TuningArgs {
    /// Scene preset: indoor or outdoor.
    #[arg(long)]
    profile: Option<String>,
    /// Config file with `key = value` lines (keys match these flags).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scan channels L.
    #[arg(long)]
    channels: Option<usize>,
    /// Horizontal bins per revolution N_h.
    #[arg(long)]
    bins: Option<usize>,
    /// Row sampling rate S_row.
    #[arg(long)]
    s_row: Option<usize>,
    /// Column sampling rate S_col.
    #[arg(long)]
    s_col: Option<usize>,
    /// Vertical FoV in degrees (default: auto-fit to the data).
    #[arg(long)]
    vfov_deg: Option<f64>,
    /// Horizontal FoV in degrees.
    #[arg(long)]
    hfov_deg: Option<f64>,
    /// Horizontal cliff threshold in meters.
    #[arg(long)]
    cliff_h: Option<f64>,
    /// Vertical cliff threshold in meters.
    #[arg(long)]
    cliff_v: Option<f64>,
    /// Diagonal cliff threshold in meters.
    #[arg(long)]
    cliff_d: Option<f64>,
    /// Patch size P_r in original cells.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Extended-ring width in upsampled pixels.
    #[arg(long)]
    extend: Option<usize>,
    /// Degree-search kernel pivot k.
    #[arg(long)]
    kernel_pivot: Option<f64>,
    /// Degree-search stop threshold in meters.
    #[arg(long)]
    error_threshold: Option<f64>,
    #[arg(long)]
    degree_min: Option<usize>,
    #[arg(long)]
    degree_max: Option<usize>,
}

impl TuningArgs {
    fn build(&self) -> Result<Config> {
        let profile = match &self.profile {
            Some(p) => p.parse()?,
            None => Profile::Outdoor,
        };
        let mut cfg = Config::profile(profile);
        if let Some(path) = &self.config {
            cfg.apply_file(&std::fs::read_to_string(path)?)?;
        }
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(self.channels, cfg.channels);
        set!(self.bins, cfg.horizontal_bins);
        set!(self.s_row, cfg.s_row);
        set!(self.s_col, cfg.s_col);
        if let Some(v) = self.vfov_deg {
            cfg.vertical_fov_rad = Some(v.to_radians());
        }
        if let Some(v) = self.hfov_deg {
            cfg.horizontal_fov_rad = v.to_radians();
        }
        set!(self.cliff_h, cfg.cliff_horizontal_m);
        set!(self.cliff_v, cfg.cliff_vertical_m);
        set!(self.cliff_d, cfg.cliff_diagonal_m);
        set!(self.patch_size, cfg.patch_size);
        if let Some(v) = self.extend {
            cfg.extend_px = Some(v);
        }
        set!(self.kernel_pivot, cfg.kernel_pivot);
        set!(self.error_threshold, cfg.error_threshold_m);
        set!(self.degree_min, cfg.degree_min);
        set!(self.degree_max, cfg.degree_max);
        Ok(cfg)
    }
}

#[derive(Args)]
struct EncodeArgs {
    /// Input point cloud (.bin, .ply, .pcd).
    #[arg(short, long)]
    input: PathBuf,
    /// Output container path.
    #[arg(short, long)]
    output: PathBuf,
    /// Override the uncompressed byte size used for the CP figure
    /// (default: input file size).
    #[arg(long)]
    original_size: Option<u64>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Input container.
    #[arg(short, long)]
    input: PathBuf,
    /// Output point cloud path.
    #[arg(short, long)]
    output: PathBuf,
    /// Row density multiplier (>= 1; fractions allowed).
    #[arg(long, default_value_t = 1.0)]
    r_row: f64,
    /// Column density multiplier.
    #[arg(long, default_value_t = 1.0)]
    r_col: f64,
    /// Output format: bin, ply, ply-ascii, pcd, pcd-ascii
    /// (default: from the output extension).
    #[arg(long)]
    format: Option<String>,
    /// Skip mask filtering of the reconstructed grid.
    #[arg(long)]
    no_masks: bool,
}

#[derive(Args)]
struct UpsampleArgs {
    /// Input point cloud.
    #[arg(short, long)]
    input: PathBuf,
    /// Output (upsampled) point cloud path.
    #[arg(short, long)]
    output: PathBuf,
    /// Output format (default: from the output extension).
    #[arg(long)]
    format: Option<String>,
    /// Write the intermediate triangle mesh as ASCII PLY.
    #[arg(long)]
    export_mesh: Option<PathBuf>,
    /// Skip mask denoising.
    #[arg(long)]
    no_masks: bool,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Reconstructed cloud.
    #[arg(long)]
    recon: PathBuf,
    /// Ground-truth cloud.
    #[arg(long)]
    gt: PathBuf,
    /// Write the CDF report here as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Container whose size yields the compression percentage.
    #[arg(long)]
    curl: Option<PathBuf>,
    /// Fail (exit 3) if the mean error exceeds this.
    #[arg(long)]
    max_mean: Option<f64>,
    /// Fail (exit 3) if the compression percentage exceeds this.
    #[arg(long)]
    max_cp: Option<f64>,
    /// Pool distances from both directions instead of recon -> gt only.
    #[arg(long)]
    chamfer: bool,
}

#[derive(Args)]
struct InfoArgs {
    /// Container path.
    input: PathBuf,
}

/// Parses argv and runs; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message; usage errors exit 2
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // ignore the error if a pool already exists (repeat calls in tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let result = match &cli.command {
        Command::Encode(args) => cmd_encode(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Upsample(args) => cmd_upsample(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Info(args) => cmd_info(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Vertical FoV that covers every point's elevation, with a hair of slack.
fn auto_vertical_fov(pc: &PointCloud) -> Result<f64> {
    let mut max_abs: f64 = 0.0;
    for p in &pc.points {
        if let Ok(s) = cart_to_spherical(p) {
            max_abs = max_abs.max(s.elevation_rad().abs());
        }
    }
    if max_abs == 0.0 {
        max_abs = 1e-3; // planar cloud; give the single row a sliver of FoV
    }
    Ok((2.0 * max_abs * (1.0 + 1e-9) + 1e-12).min(std::f64::consts::PI))
}

fn format_for(path: &Path, flag: &Option<String>) -> std::result::Result<CloudFormat, i32> {
    if let Some(name) = flag {
        return name.parse().map_err(|e| {
            eprintln!("error: {e}");
            eprintln!("usage: --format <bin|ply|ply-ascii|pcd|pcd-ascii>");
            2
        });
    }
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("bin") => Ok(CloudFormat::KittiBin),
        Some("ply") => Ok(CloudFormat::PlyBinary),
        Some("pcd") => Ok(CloudFormat::PcdBinary),
        _ => {
            eprintln!(
                "error: cannot infer output format from '{}'",
                path.display()
            );
            eprintln!("usage: --format <bin|ply|ply-ascii|pcd|pcd-ascii>");
            Err(2)
        }
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn cmd_encode(args: &EncodeArgs) -> Result<i32> {
    let start = Instant::now();
    let t = Instant::now();
    let cloud = read_pointcloud(&args.input)?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let read_time = t.elapsed();

    let cfg = args.tuning.build()?;
    let sensor = cfg.sensor(auto_vertical_fov(&cloud)?)?;
    let mut codec_cfg = cfg.codec_config()?;
    let file_size = std::fs::metadata(&args.input)?.len();
    codec_cfg.original_size_bytes = Some(args.original_size.unwrap_or(file_size));

    let (encoding, stats) = codec::encode_with_stats(&cloud, &sensor, &codec_cfg)?;
    let t = Instant::now();
    let bytes = codec::serialize(&encoding);
    let serialize_time = t.elapsed();
    let t = Instant::now();
    std::fs::write(&args.output, &bytes)?;
    let write_time = t.elapsed();
    let total = start.elapsed();

    let cp = bytes.len() as f64 / encoding.original_size_bytes as f64 * 100.0;
    println!("points_in: {}", stats.points_in);
    println!("out_of_fov: {}", stats.out_of_fov);
    println!(
        "patch_count: {} ({} empty)",
        encoding.layout.patch_count(),
        stats.empty_patches
    );
    println!("mean_degree: {:.3}", stats.mean_degree);
    println!("container_bytes: {}", bytes.len());
    println!("original_bytes: {}", encoding.original_size_bytes);
    println!("cp_percent: {cp}");
    println!(
        "stage_ms: read={:.1} project={:.1} mesh={:.1} upsample={:.1} masks={:.1} encode={:.1} serialize={:.1} write={:.1}",
        ms(read_time),
        ms(stats.project_time),
        ms(stats.mesh_time),
        ms(stats.upsample_time),
        ms(stats.mask_time),
        ms(stats.encode_time),
        ms(serialize_time),
        ms(write_time)
    );
    println!("total_ms: {:.1}", ms(total));
    Ok(0)
}

fn cmd_reconstruct(args: &ReconstructArgs) -> Result<i32> {
    let format = match format_for(&args.output, &args.format) {
        Ok(f) => f,
        Err(code) => return Ok(code),
    };
    let bytes = std::fs::read(&args.input)?;
    let encoding = codec::deserialize(&bytes)?;
    let request = ReconstructionRequest {
        r_row: args.r_row,
        r_col: args.r_col,
        apply_masks: !args.no_masks,
    };
    let cloud = reconstruct(&encoding, &request)?;
    write_pointcloud(&args.output, &cloud, format)?;
    println!("points_out: {}", cloud.len());
    Ok(0)
}

fn cmd_upsample(args: &UpsampleArgs) -> Result<i32> {
    let format = match format_for(&args.output, &args.format) {
        Ok(f) => f,
        Err(code) => return Ok(code),
    };
    let cloud = read_pointcloud(&args.input)?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let cfg = args.tuning.build()?;
    let sensor = cfg.sensor(auto_vertical_fov(&cloud)?)?;

    let mesh = mesh_scan(&cloud, &sensor)?;
    if let Some(path) = &args.export_mesh {
        write_mesh_ply(path, &mesh)?;
    }
    let upsampled = upsample(&mesh, &sensor)?;
    let image = if args.no_masks {
        upsampled
    } else {
        let base = sensor.base_resolution();
        let projection = crate::geometry::project_to_depth_image(&cloud, &base)?;
        let (_, cleaned) = MaskSet::derive(&projection.image, &upsampled, &cfg.thresholds()?)?;
        cleaned
    };
    let out = unproject_depth_image(&image);
    write_pointcloud(&args.output, &out, format)?;
    println!("points_in: {}", cloud.len());
    println!("triangles: {}", mesh.triangles.len());
    println!("points_out: {}", out.len());
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let recon = read_pointcloud(&args.recon)?;
    let gt = read_pointcloud(&args.gt)?;
    let mut report = if args.chamfer {
        metrics::chamfer_error(&recon, &gt)?
    } else {
        metrics::nn_error(&recon, &gt)?
    };
    if let Some(curl_path) = &args.curl {
        let bytes = std::fs::read(curl_path)?;
        let encoding = codec::deserialize(&bytes)?;
        report.cp_percent = Some(bytes.len() as f64 / encoding.original_size_bytes as f64 * 100.0);
    } else if args.max_cp.is_some() {
        eprintln!("error: --max-cp needs --curl to compute the compression percentage");
        return Ok(2);
    }
    if let Some(path) = &args.csv {
        std::fs::write(path, metrics::report_csv(&report))?;
    }
    println!("mean_m: {}", report.mean_m);
    println!("std_m: {}", report.std_m);
    match report.cp_percent {
        Some(cp) => println!("cp_percent: {cp}"),
        None => println!("cp_percent: n/a"),
    }
    println!("reconstructed_points: {}", report.point_counts.0);
    println!("ground_truth_points: {}", report.point_counts.1);

    let mut violated = false;
    if let Some(max_mean) = args.max_mean {
        if report.mean_m > max_mean {
            eprintln!("mean error {} exceeds --max-mean {max_mean}", report.mean_m);
            violated = true;
        }
    }
    if let (Some(max_cp), Some(cp)) = (args.max_cp, report.cp_percent) {
        if cp > max_cp {
            eprintln!("compression percentage {cp} exceeds --max-cp {max_cp}");
            violated = true;
        }
    }
    Ok(if violated { 3 } else { 0 })
}

fn cmd_info(args: &InfoArgs) -> Result<i32> {
    let bytes = std::fs::read(&args.input)?;
    let enc: CurlEncoding = codec::deserialize(&bytes)?;
    let fitted: Vec<usize> = enc.patches.iter().filter_map(|p| p.degree()).collect();
    let mean_degree = if fitted.is_empty() {
        0.0
    } else {
        fitted.iter().sum::<usize>() as f64 / fitted.len() as f64
    };
    println!(
        "{}",
        serde_json::json!({"magic": "CURL", "version": codec::CONTAINER_VERSION,
                           "container_bytes": bytes.len()})
    );
    println!(
        "{}",
        serde_json::json!({"sensor": {
            "vertical_fov_rad": enc.sensor.vertical_fov_rad,
            "horizontal_fov_rad": enc.sensor.horizontal_fov_rad,
            "channels": enc.sensor.channels,
            "horizontal_bins": enc.sensor.horizontal_bins,
            "row_rate": enc.sensor.row_rate,
            "col_rate": enc.sensor.col_rate}})
    );
    println!(
        "{}",
        serde_json::json!({"layout": {
            "patch_size": enc.layout.patch_size,
            "extend_px": enc.layout.extend,
            "grid_rows": enc.layout.grid_rows,
            "grid_cols": enc.layout.grid_cols}})
    );
    println!(
        "{}",
        serde_json::json!({"cliff_thresholds_m": {
            "horizontal": enc.thresholds.horizontal_m,
            "vertical": enc.thresholds.vertical_m,
            "diagonal": enc.thresholds.diagonal_m}})
    );
    println!(
        "{}",
        serde_json::json!({"patches": {
            "total": enc.patches.len(),
            "empty": enc.patches.len() - fitted.len(),
            "mean_degree": mean_degree}})
    );
    println!(
        "{}",
        serde_json::json!({"original_size_bytes": enc.original_size_bytes,
                           "point_grid_ones": enc.point_grid.count_ones(),
                           "cp_percent": bytes.len() as f64
                               / enc.original_size_bytes as f64 * 100.0})
    );
    Ok(0)
}
