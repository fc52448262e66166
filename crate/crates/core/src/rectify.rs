//! Fisheye to perspective rectification through a virtual pinhole camera.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::image::{quantize, GrayImage};
use crate::{Error, Mat3, Pixel, Result, Vec3};

/// Ideal pinhole camera: square pixels, no skew, no distortion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    /// Pixel of a camera-frame point, `None` if it is behind the camera.
    /// No image-bounds check.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Option<Pixel> {
        if !(p.z > 0.0) {
            return None;
        }
        Some([
            self.focal * p.x / p.z + self.cx,
            self.focal * p.y / p.z + self.cy,
        ])
    }

    pub fn contains(&self, px: Pixel) -> bool {
        px[0] >= 0.0
            && px[1] >= 0.0
            && px[0] <= (self.width - 1) as f64
            && px[1] <= (self.height - 1) as f64
    }

    /// Viewing direction (not normalized, `z = 1`) of a pixel.
    #[inline]
    pub fn ray(&self, px: Pixel) -> Vec3 {
        Vec3::new(
            (px[0] - self.cx) / self.focal,
            (px[1] - self.cy) / self.focal,
            1.0,
        )
    }
}

/// Virtual perspective camera sharing its center with the fisheye camera.
///
/// `rotation` maps directions in the virtual camera frame into the fisheye
/// camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectificationSpec {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [[f64; 3]; 3],
}

impl RectificationSpec {
    /// Focal length `fx / 2`, same image size as the fisheye, optical axes aligned.
    pub fn default_for(intrinsics: &CameraIntrinsics) -> Self {
        Self {
            focal: intrinsics.fx / 2.0,
            width: intrinsics.width,
            height: intrinsics.height,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        let r = &self.rotation;
        Mat3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn with_rotation(mut self, rotation: &Mat3) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.rotation[i][j] = rotation[(i, j)];
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::InvalidRectification("focal length must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidRectification("image size must be positive"));
        }
        let r = self.rotation_matrix();
        if r.iter().any(|v| !v.is_finite())
            || (r.transpose() * r - Mat3::identity()).abs().max() > CameraPose::ORTHONORMAL_TOL
            || (r.determinant() - 1.0).abs() > CameraPose::ORTHONORMAL_TOL
        {
            return Err(Error::InvalidRectification(
                "rotation is not a proper rotation",
            ));
        }
        // a finite pinhole image always has a field of view below 180 degrees
        Ok(())
    }

    pub fn pinhole(&self) -> PinholeCamera {
        PinholeCamera {
            focal: self.focal,
            cx: (self.width - 1) as f64 / 2.0,
            cy: (self.height - 1) as f64 / 2.0,
            width: self.width,
            height: self.height,
        }
    }

    /// Horizontal and vertical field of view, radians.
    pub fn field_of_view(&self) -> [f64; 2] {
        [
            2.0 * (self.width as f64 / (2.0 * self.focal)).atan(),
            2.0 * (self.height as f64 / (2.0 * self.focal)).atan(),
        ]
    }

    /// Pose of the virtual camera given the fisheye pose.
    pub fn virtual_pose(&self, fisheye: &CameraPose) -> CameraPose {
        let rt = self.rotation_matrix().transpose();
        fisheye.then(&rt, &Vec3::zeros())
    }

    /// Pose of the fisheye camera given the virtual camera pose.
    pub fn fisheye_pose(&self, virtual_pose: &CameraPose) -> CameraPose {
        virtual_pose.then(&self.rotation_matrix(), &Vec3::zeros())
    }
}

/// For every virtual pixel, the fisheye pixel it samples (`None` if unmapped).
#[derive(Clone, Debug, PartialEq)]
pub struct RectificationMap {
    width: u32,
    height: u32,
    source_width: u32,
    source_height: u32,
    entries: Vec<Option<Pixel>>,
}

impl RectificationMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn source_dimensions(&self) -> (u32, u32) {
        (self.source_width, self.source_height)
    }

    pub fn get(&self, x: u32, y: u32) -> Option<Pixel> {
        self.entries[y as usize * self.width as usize + x as usize]
    }

    pub fn entries(&self) -> &[Option<Pixel>] {
        &self.entries
    }

    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    /// A map of the given size whose entries are all invalid.
    pub fn all_invalid(width: u32, height: u32, source_width: u32, source_height: u32) -> Self {
        Self {
            width,
            height,
            source_width,
            source_height,
            entries: alloc::vec![None; width as usize * height as usize],
        }
    }
}

pub fn build_rectification_map(
    intrinsics: &CameraIntrinsics,
    spec: &RectificationSpec,
) -> RectificationMap {
    let pinhole = spec.pinhole();
    let rotation = spec.rotation_matrix();
    let mut entries = Vec::with_capacity(spec.width as usize * spec.height as usize);
    for v in 0..spec.height {
        for u in 0..spec.width {
            let ray = rotation * pinhole.ray([u as f64, v as f64]);
            entries.push(intrinsics.project_camera(&ray));
        }
    }
    RectificationMap {
        width: spec.width,
        height: spec.height,
        source_width: intrinsics.width,
        source_height: intrinsics.height,
        entries,
    }
}

/// Bilinear resampling of `image` through `map`; invalid entries become 0.
pub fn rectify_image(image: &GrayImage, map: &RectificationMap) -> Result<GrayImage> {
    if image.dimensions() != map.source_dimensions() {
        return Err(Error::DimensionMismatch {
            expected_w: map.source_width,
            expected_h: map.source_height,
            found_w: image.width(),
            found_h: image.height(),
        });
    }
    let data = map
        .entries
        .iter()
        .map(|e| {
            e.and_then(|px| image.bilinear(px[0], px[1]))
                .map_or(0, quantize)
        })
        .collect();
    GrayImage::from_raw(map.width, map.height, data)
}
