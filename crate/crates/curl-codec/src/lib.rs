//! Compact, continuous LiDAR point-cloud codec.
//!
//! A 360-degree scan is meshed in a 2D polar parametrization, densified by
//! ray-casting a virtual LiDAR grid against the mesh, denoised with point and
//! cliff mask bitmaps, and encoded patch-by-patch as real spherical-harmonics
//! coefficients with an adaptive per-patch degree. The resulting container is
//! a fraction of the raw scan size and reconstructs a point cloud at any
//! requested density from the same bytes.
//!
//! The pipeline stages live in their own modules:
//!
//! - [`geometry`]: coordinate conventions and depth-image projection
//! - [`meshing`]: polar-parametrized 2D Delaunay meshing
//! - [`sampling`]: virtual-grid ray casting against the mesh
//! - [`masks`]: point-grid and cliff-grid denoising bitmaps
//! - [`spharm`]: real spherical-harmonics basis and least-squares fits
//! - [`codec`]: patching, adaptive refinement, and the container format
//! - [`reconstruct`]: continuous-density decoding
//! - [`metrics`]: nearest-neighbor error reports
//! - [`io`]: KITTI `.bin`, PLY, and PCD readers/writers
//!
//! See the `examples/` directory for one runnable walkthrough per stage, and
//! `src/bin/curl_codec.rs` for the command-line front end.

pub mod bitmap;
pub mod cli;
pub mod codec;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod masks;
pub mod meshing;
pub mod metrics;
pub mod reconstruct;
pub mod sampling;
pub mod spharm;

pub use codec::{encode, CodecConfig, CurlEncoding};
pub use config::{Config, Profile};
pub use error::{Error, Result};
pub use geometry::{DepthImage, PointCloud, SensorModel};
pub use reconstruct::{reconstruct, ReconstructionRequest};
