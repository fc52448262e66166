//! Localization of a static, downward-looking fisheye camera in a metric prior
//! map made of a satellite raster and LiDAR ground points.
//!
//! The pipeline has two steps:
//!
//! 1. [`pnp`]: 2D-2D matches between the rectified fisheye image and a cropped
//!    satellite raster are lifted to 3D with the map scale and the LiDAR ground
//!    height, then a P3P + RANSAC loop with nonlinear refinement yields the
//!    initial pose.
//! 2. [`mi`]: the initial pose is refined by maximizing the mutual information
//!    between LiDAR reflectivity and fisheye grayscale, using an exhaustive
//!    coarse-to-fine grid search over `[x, y, z, yaw]`.
//!
//! [`synth`] renders procedural scenes with known ground truth so every step can
//! be checked end to end.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, image codecs,
//! parallel execution and the command line live in the `infraloc` crate.

#![no_std]

extern crate alloc;

pub mod camera;
pub mod error;
pub mod eval;
pub mod image;
pub mod map;
pub mod mi;
pub mod pnp;
pub mod rectify;
pub mod synth;

pub use camera::{CameraIntrinsics, CameraPose};
pub use error::{Error, Result};
pub use image::GrayImage;
pub use map::{GpsInit, LidarGroundMap, LidarPoint, PriorMap, SatelliteMap};
pub use mi::{GridSearchConfig, IntensityHistogram, MiEvaluation, Theta};
pub use pnp::{CorrespondenceSet, PnpResult, RansacConfig};
pub use rectify::{RectificationMap, RectificationSpec};

/// 3-vector in meters (world or camera frame).
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix, used for rotations.
pub type Mat3 = nalgebra::Matrix3<f64>;
/// Pixel coordinates `[u, v]`: column, then row. Integer values are pixel centers.
pub type Pixel = [f64; 2];
