//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the codec pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Cartesian-to-spherical conversion of the origin.
    #[error("cannot convert the origin to spherical coordinates (zero range)")]
    ZeroRange,

    /// An operation received a point cloud with no points.
    #[error("empty point cloud")]
    EmptyCloud,

    /// Ray casting against a mesh with no triangles.
    #[error("empty mesh")]
    EmptyMesh,

    /// No scan point could be assigned a valid channel row.
    #[error("channel recovery failed: {0}")]
    ChannelRecoveryFailed(String),

    /// Triangulation input has fewer than 3 non-collinear vertices.
    #[error("degenerate triangulation input: {0}")]
    DegenerateInput(String),

    /// Mask and image dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    /// A least-squares factorization failed to converge.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Reconstruction multiplier below 1.
    #[error("invalid reconstruction multiplier {0} (must be >= 1)")]
    InvalidMultiplier(f64),

    /// Container does not start with the expected magic bytes.
    #[error("bad container magic")]
    BadMagic,

    /// Container version is not supported by this build.
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),

    /// Container payload ends before the declared content.
    #[error("truncated container (need {needed} bytes at offset {offset})")]
    Truncated { offset: usize, needed: usize },

    /// Container CRC32 does not match its payload.
    #[error("container checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    /// Point-cloud file format could not be identified.
    #[error("unknown point cloud format: {0}")]
    UnknownFormat(String),

    /// Point-cloud file is structurally invalid.
    #[error("malformed file at byte {offset}: {reason}")]
    MalformedFile { offset: usize, reason: String },

    /// Invalid sensor or codec configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Underlying I/O error.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
