//! Tunable parameters with indoor/outdoor presets. Precedence is
//! built-in defaults < profile < config file < explicit flags; the CLI layers
//! these in order.

use std::f64::consts::TAU;

use crate::codec::{CodecConfig, RefinementConfig, DEGREE_HARD_CAP};
use crate::error::{Error, Result};
use crate::geometry::SensorModel;
use crate::masks::CliffThresholds;

/// Scene preset selecting the default thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Indoor,
    Outdoor,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "indoor" => Ok(Self::Indoor),
            "outdoor" => Ok(Self::Outdoor),
            other => Err(Error::InvalidConfig(format!(
                "unknown profile '{other}' (expected indoor or outdoor)"
            ))),
        }
    }
}

/// Every tunable of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Config {
    /// Scan channels `L`.
    pub channels: usize,
    /// Horizontal bins per revolution `N_h`.
    pub horizontal_bins: usize,
    /// Row sampling rate `S_row`.
    pub s_row: usize,
    /// Column sampling rate `S_col`.
    pub s_col: usize,
    /// Vertical FoV; `None` auto-fits to the data at encode time.
    pub vertical_fov_rad: Option<f64>,
    pub horizontal_fov_rad: f64,
    pub cliff_horizontal_m: f64,
    pub cliff_vertical_m: f64,
    pub cliff_diagonal_m: f64,
    /// Patch size `P_r` in original cells.
    pub patch_size: usize,
    /// Extended-ring width in upsampled pixels; `None` means one original
    /// cell (`S_row` pixels).
    pub extend_px: Option<usize>,
    /// Reconstruction multipliers.
    pub r_row: f64,
    pub r_col: f64,
    /// Degree-search kernel pivot `k`.
    pub kernel_pivot: f64,
    /// Total-error stop threshold in meters.
    pub error_threshold_m: f64,
    pub degree_min: usize,
    pub degree_max: usize,
}

impl Config {
    /// Preset values for a profile.
    pub fn profile(profile: Profile) -> Self {
        let common = Self {
            channels: 64,
            horizontal_bins: 1024,
            s_row: 2,
            s_col: 2,
            vertical_fov_rad: None,
            horizontal_fov_rad: TAU,
            cliff_horizontal_m: 2.0,
            cliff_vertical_m: 0.2,
            cliff_diagonal_m: 2.0,
            patch_size: 4,
            extend_px: None,
            r_row: 1.0,
            r_col: 1.0,
            kernel_pivot: 9.0,
            error_threshold_m: 0.05,
            degree_min: 0,
            degree_max: DEGREE_HARD_CAP,
        };
        match profile {
            Profile::Outdoor => common,
            Profile::Indoor => Self {
                cliff_horizontal_m: 0.1,
                cliff_vertical_m: 0.1,
                cliff_diagonal_m: 0.1414,
                error_threshold_m: 0.01,
                ..common
            },
        }
    }

    pub fn extend_pixels(&self) -> usize {
        self.extend_px.unwrap_or(self.s_row)
    }

    /// Sensor model, falling back to `auto_vfov` when no FoV was given.
    pub fn sensor(&self, auto_vfov: f64) -> Result<SensorModel> {
        SensorModel::new(
            self.vertical_fov_rad.unwrap_or(auto_vfov),
            self.horizontal_fov_rad,
            self.channels,
            self.horizontal_bins,
            self.s_row,
            self.s_col,
        )
    }

    pub fn thresholds(&self) -> Result<CliffThresholds> {
        CliffThresholds::new(
            self.cliff_horizontal_m,
            self.cliff_vertical_m,
            self.cliff_diagonal_m,
        )
    }

    pub fn codec_config(&self) -> Result<CodecConfig> {
        Ok(CodecConfig {
            patch_size: self.patch_size,
            extend: self.extend_pixels(),
            thresholds: self.thresholds()?,
            refinement: RefinementConfig::new(
                self.kernel_pivot,
                self.error_threshold_m,
                self.degree_min,
                self.degree_max,
            )?,
            original_size_bytes: None,
        })
    }

    /// Applies `key = value` lines from a config file. Keys mirror the CLI
    /// long flags; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |e: String| Error::InvalidConfig(format!("config line {}: {e}", lineno + 1));
            let parse_f = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
            let parse_u = |v: &str| v.parse::<usize>().map_err(|e| bad(e.to_string()));
            match key {
                "channels" => self.channels = parse_u(value)?,
                "bins" => self.horizontal_bins = parse_u(value)?,
                "s-row" => self.s_row = parse_u(value)?,
                "s-col" => self.s_col = parse_u(value)?,
                "vfov-deg" => self.vertical_fov_rad = Some(parse_f(value)?.to_radians()),
                "hfov-deg" => self.horizontal_fov_rad = parse_f(value)?.to_radians(),
                "cliff-h" => self.cliff_horizontal_m = parse_f(value)?,
                "cliff-v" => self.cliff_vertical_m = parse_f(value)?,
                "cliff-d" => self.cliff_diagonal_m = parse_f(value)?,
                "patch-size" => self.patch_size = parse_u(value)?,
                "extend" => self.extend_px = Some(parse_u(value)?),
                "r-row" => self.r_row = parse_f(value)?,
                "r-col" => self.r_col = parse_f(value)?,
                "kernel-pivot" => self.kernel_pivot = parse_f(value)?,
                "error-threshold" => self.error_threshold_m = parse_f(value)?,
                "degree-min" => self.degree_min = parse_u(value)?,
                "degree-max" => self.degree_max = parse_u(value)?,
                other => return Err(bad(format!("unknown key '{other}'"))),
            }
        }
        Ok(())
    }
}

impl Default for Config {
    fn default() -> Self {
        Self::profile(Profile::Outdoor)
    }
}
