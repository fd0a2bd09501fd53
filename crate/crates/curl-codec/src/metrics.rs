//! Reconstruction-quality metrics: exact nearest-neighbor distances from the
//! reconstruction to the ground truth, their CDF, and CSV reporting.

use nalgebra::Point3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Number of uniform CDF thresholds between 0 and the maximum error.
const CDF_STEPS: usize = 100;

/// Axis-aligned kd-tree over 3D points with exact backtracking search.
pub struct KdTree {
    points: Vec<Point3<f64>>,
    nodes: Vec<Node>,
    root: i32,
}

struct Node {
    /// Point index at this node.
    index: u32,
    /// Split axis (0, 1, 2).
    axis: u8,
    left: i32,
    right: i32,
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let mut tree = Self {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: -1,
        };
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        tree.root = tree.build_node(&mut order, 0);
        Ok(tree)
    }

    fn build_node(&mut self, order: &mut [u32], depth: usize) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = (depth % 3) as u8;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            let pa = self.points[a as usize][axis as usize];
            let pb = self.points[b as usize][axis as usize];
            pa.partial_cmp(&pb).unwrap().then(a.cmp(&b))
        });
        let index = order[mid];
        let node_id = self.nodes.len() as i32;
        self.nodes.push(Node {
            index,
            axis,
            left: -1,
            right: -1,
        });
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_node(lo, depth + 1);
        let right = self.build_node(hi, depth + 1);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    /// Exact nearest neighbor: returns (squared distance, point index).
    pub fn nearest(&self, query: &Point3<f64>) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0usize);
        self.search(self.root, query, &mut best);
        best
    }

    fn search(&self, node_id: i32, query: &Point3<f64>, best: &mut (f64, usize)) {
        if node_id < 0 {
            return;
        }
        let node = &self.nodes[node_id as usize];
        let p = &self.points[node.index as usize];
        let d2 = (p - query).norm_squared();
        if d2 < best.0 {
            *best = (d2, node.index as usize);
        }
        let delta = query[node.axis as usize] - p[node.axis as usize];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, query, best);
        if delta * delta <= best.0 {
            self.search(far, query, best);
        }
    }
}

/// Error statistics of one reconstruction against a ground-truth cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub mean_m: f64,
    /// Population standard deviation of the distances, in meters.
    pub std_m: f64,
    /// (threshold_m, cumulative fraction) rows; nondecreasing, ends at 1.
    pub cdf: Vec<(f64, f64)>,
    /// (reconstructed, ground truth) point counts.
    pub point_counts: (usize, usize),
    pub cp_percent: Option<f64>,
}

fn report_from_distances(mut distances: Vec<f64>, point_counts: (usize, usize)) -> ErrorReport {
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let var = distances
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / n;
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max = *distances.last().unwrap();
    let mut cdf = Vec::with_capacity(CDF_STEPS);
    for i in 0..CDF_STEPS {
        let threshold = if CDF_STEPS == 1 {
            max
        } else {
            max * i as f64 / (CDF_STEPS - 1) as f64
        };
        let covered = distances.partition_point(|d| *d <= threshold);
        cdf.push((threshold, covered as f64 / n));
    }
    ErrorReport {
        mean_m: mean,
        std_m: var.sqrt(),
        cdf,
        point_counts,
        cp_percent: None,
    }
}

/// One-directional nearest-neighbor error (reconstruction against ground
/// truth). The spatial index is exact; queries run in parallel.
pub fn nn_error(recon: &PointCloud, gt: &PointCloud) -> Result<ErrorReport> {
    if recon.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let tree = KdTree::build(&gt.points)?;
    let distances: Vec<f64> = recon
        .points
        .par_iter()
        .map(|p| tree.nearest(p).0.sqrt())
        .collect();
    Ok(report_from_distances(distances, (recon.len(), gt.len())))
}

/// Bidirectional (Chamfer-style) variant: distances pooled from both
/// directions.
pub fn chamfer_error(recon: &PointCloud, gt: &PointCloud) -> Result<ErrorReport> {
    if recon.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let gt_tree = KdTree::build(&gt.points)?;
    let recon_tree = KdTree::build(&recon.points)?;
    let mut distances: Vec<f64> = recon
        .points
        .par_iter()
        .map(|p| gt_tree.nearest(p).0.sqrt())
        .collect();
    let back: Vec<f64> = gt
        .points
        .par_iter()
        .map(|p| recon_tree.nearest(p).0.sqrt())
        .collect();
    distances.extend(back);
    Ok(report_from_distances(distances, (recon.len(), gt.len())))
}

/// Deterministic CSV rendering: CDF table, then a summary block.
pub fn report_csv(report: &ErrorReport) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("threshold_m,cumulative_fraction\n");
    for (threshold, fraction) in &report.cdf {
        out.push_str(&format!("{threshold},{fraction}\n"));
    }
    out.push_str("metric,value\n");
    out.push_str(&format!("mean_m,{}\n", report.mean_m));
    out.push_str(&format!("std_m,{}\n", report.std_m));
    match report.cp_percent {
        Some(cp) => out.push_str(&format!("cp_percent,{cp}\n")),
        None => out.push_str("cp_percent,\n"),
    }
    out.push_str(&format!("reconstructed_points,{}\n", report.point_counts.0));
    out.push_str(&format!("ground_truth_points,{}\n", report.point_counts.1));
    out.into_bytes()
}

/// Parses the CSV produced by [`report_csv`] back into memory.
pub fn parse_report_csv(bytes: &[u8]) -> Result<ErrorReport> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::MalformedFile {
        offset: e.valid_up_to(),
        reason: "report CSV is not UTF-8".into(),
    })?;
    let mut cdf = Vec::new();
    let mut mean = None;
    let mut std = None;
    let mut cp = None;
    let mut counts = (0usize, 0usize);
    let mut in_summary = false;
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            continue; // cdf header
        }
        if line == "metric,value" {
            in_summary = true;
            continue;
        }
        let (key, value) = line.split_once(',').ok_or_else(|| Error::MalformedFile {
            offset: 0,
            reason: format!("line {lineno} has no comma"),
        })?;
        let bad = |reason: String| Error::MalformedFile { offset: 0, reason };
        if in_summary {
            match key {
                "mean_m" => mean = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "std_m" => std = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                "cp_percent" => {
                    cp = if value.is_empty() {
                        None
                    } else {
                        Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                    }
                }
                "reconstructed_points" => {
                    counts.0 = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "ground_truth_points" => {
                    counts.1 = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                other => return Err(bad(format!("unknown summary key {other}"))),
            }
        } else {
            cdf.push((
                key.parse().map_err(|e| bad(format!("{e}")))?,
                value.parse().map_err(|e| bad(format!("{e}")))?,
            ));
        }
    }
    Ok(ErrorReport {
        mean_m: mean.ok_or_else(|| Error::MalformedFile {
            offset: 0,
            reason: "missing mean_m".into(),
        })?,
        std_m: std.ok_or_else(|| Error::MalformedFile {
            offset: 0,
            reason: "missing std_m".into(),
        })?,
        cdf,
        point_counts: counts,
        cp_percent: cp,
    })
}
