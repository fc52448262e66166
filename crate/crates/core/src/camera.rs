//! Unified omnidirectional (sphere) camera model with radial-tangential
//! distortion, and camera extrinsics.
//!
//! A camera-frame point `P` is normalized onto the unit sphere, shifted by the
//! mirror offset `xi` along the optical axis and perspective-divided:
//!
//! ```text
//! Ps = P / |P|
//! m  = (xs / (zs + xi), ys / (zs + xi))
//! md = distort(m; k1, k2, p1, p2)
//! u  = fx * mdx + s * mdy + cx
//! v  = fy * mdy + cy
//! ```
//!
//! With `xi = 0` and no distortion this is exactly the pinhole model.
//!
//! Projection is only defined where it is one-to-one: for `xi > 1` the sphere
//! is cut at `zs = -1 / xi`, and `|m|` must stay below the first radius at
//! which the radial distortion stops increasing.

use nalgebra::{Matrix2, Rotation3, UnitQuaternion, Vector2};
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Mat3, Pixel, Result, Vec3};

/// Points with `zs + xi` at or below this value are not projectable.
pub const PROJECTABLE_EPS: f64 = 1e-9;
const UNDISTORT_MAX_ITERS: usize = 20;
const UNDISTORT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    /// Skew, in pixels.
    pub s: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    /// Mirror offset of the unified model; `0` is a pinhole camera.
    pub xi: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    /// Undistorted intrinsics with zero skew.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, xi: f64, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            s: 0.0,
            cx,
            cy,
            k1: 0.0,
            k2: 0.0,
            p1: 0.0,
            p2: 0.0,
            xi,
            width,
            height,
        }
    }

    pub fn with_distortion(mut self, k1: f64, k2: f64, p1: f64, p2: f64) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self.p1 = p1;
        self.p2 = p2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.fx, self.fy, self.s, self.cx, self.cy, self.k1, self.k2, self.p1, self.p2, self.xi,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite parameter"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidIntrinsics("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be positive"));
        }
        if self.xi < 0.0 {
            return Err(Error::InvalidIntrinsics("xi must be non-negative"));
        }
        if self.cx < 0.0
            || self.cy < 0.0
            || self.cx > (self.width - 1) as f64
            || self.cy > (self.height - 1) as f64
        {
            return Err(Error::InvalidIntrinsics(
                "principal point outside the image",
            ));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0 || self.p1 != 0.0 || self.p2 != 0.0
    }

    /// Squared normalized radius at which `r * (1 + k1 r^2 + k2 r^4)` stops
    /// increasing; infinite when it never does.
    pub fn radial_limit_sq(&self) -> f64 {
        // first positive root of 1 + 3 k1 u + 5 k2 u^2, u = r^2
        let (a, b) = (5.0 * self.k2, 3.0 * self.k1);
        if a == 0.0 {
            return if b < 0.0 { -1.0 / b } else { f64::INFINITY };
        }
        let disc = b * b - 4.0 * a;
        if disc < 0.0 {
            return f64::INFINITY;
        }
        let sq = disc.sqrt();
        // stable pair of roots
        let q = -0.5 * (b + b.signum() * sq);
        let roots = [q / a, if q != 0.0 { 1.0 / q } else { f64::INFINITY }];
        roots
            .into_iter()
            .filter(|u| *u > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Applies radial-tangential distortion to normalized coordinates.
    #[inline]
    pub fn distort(&self, m: [f64; 2]) -> [f64; 2] {
        let [x, y] = m;
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + self.k2 * r2);
        [
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        ]
    }

    fn distortion_jacobian(&self, m: [f64; 2]) -> Matrix2<f64> {
        let [x, y] = m;
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + self.k2 * r2);
        // d(radial)/d(r2)
        let g = self.k1 + 2.0 * self.k2 * r2;
        let dxdx = radial + 2.0 * x * x * g + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
        let dxdy = 2.0 * x * y * g + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dydx = 2.0 * x * y * g + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
        let dydy = radial + 2.0 * y * y * g + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
        Matrix2::new(dxdx, dxdy, dydx, dydy)
    }

    /// Whether the distortion keeps orientation at `m`.
    #[inline]
    fn distortion_is_regular(&self, m: [f64; 2]) -> bool {
        !self.has_distortion() || self.distortion_jacobian(m).determinant() > 0.0
    }

    /// Inverts [`CameraIntrinsics::distort`] with Newton iterations. Steps are
    /// shortened to stay inside the one-to-one region, so the preimage found
    /// is the one [`CameraIntrinsics::project_camera`] produces.
    pub fn undistort(&self, md: [f64; 2]) -> Option<[f64; 2]> {
        if !self.has_distortion() {
            return Some(md);
        }
        let limit = self.radial_limit_sq();
        let inside =
            |m: &Vector2<f64>| m.norm_squared() < limit && self.distortion_is_regular([m.x, m.y]);
        let target = Vector2::new(md[0], md[1]);
        let mut m = target;
        if limit.is_finite() && m.norm_squared() >= limit {
            m *= (0.9 * limit / m.norm_squared()).sqrt();
        }
        while !inside(&m) {
            if m.norm_squared() < 1e-20 {
                return None;
            }
            m *= 0.5;
        }
        for _ in 0..UNDISTORT_MAX_ITERS {
            let d = self.distort([m.x, m.y]);
            let residual = Vector2::new(d[0], d[1]) - target;
            let mut step = self.distortion_jacobian([m.x, m.y]).try_inverse()? * residual;
            let mut next = m - step;
            let mut tries = 0;
            while !inside(&next) {
                tries += 1;
                if tries > 30 {
                    return None;
                }
                step *= 0.5;
                next = m - step;
            }
            m = next;
            if !(m.x.is_finite() && m.y.is_finite()) {
                return None;
            }
            // a shortened step says nothing about convergence
            if tries == 0 && step.norm() < UNDISTORT_TOL {
                return Some([m.x, m.y]);
            }
        }
        None
    }

    /// Normalized (distorted) image coordinates to pixels.
    #[inline]
    pub fn normalized_to_pixel(&self, md: [f64; 2]) -> Pixel {
        [
            self.fx * md[0] + self.s * md[1] + self.cx,
            self.fy * md[1] + self.cy,
        ]
    }

    #[inline]
    pub fn pixel_to_normalized(&self, px: Pixel) -> [f64; 2] {
        let y = (px[1] - self.cy) / self.fy;
        let x = (px[0] - self.cx - self.s * y) / self.fx;
        [x, y]
    }

    /// Whether a pixel lies in `[0, width - 1] x [0, height - 1]`.
    #[inline]
    pub fn contains(&self, px: Pixel) -> bool {
        px[0] >= 0.0
            && px[1] >= 0.0
            && px[0] <= (self.width - 1) as f64
            && px[1] <= (self.height - 1) as f64
    }

    /// Projects a camera-frame point without the image-bounds check.
    #[inline]
    pub fn project_camera_unbounded(&self, p: &Vec3) -> Option<Pixel> {
        self.project_within(p, self.radial_limit_sq())
    }

    /// [`CameraIntrinsics::project_camera_unbounded`] with a precomputed
    /// [`CameraIntrinsics::radial_limit_sq`].
    #[inline]
    pub(crate) fn project_within(&self, p: &Vec3, limit_sq: f64) -> Option<Pixel> {
        let norm = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
        // zs + xi > eps and 1 + xi zs > 0, both scaled by |P|
        let denom = p.z + self.xi * norm;
        if !(denom > PROJECTABLE_EPS * norm && norm + self.xi * p.z > 0.0) {
            return None;
        }
        let inv = 1.0 / denom;
        let m = [p.x * inv, p.y * inv];
        if !(m[0] * m[0] + m[1] * m[1] < limit_sq) || !self.distortion_is_regular(m) {
            return None;
        }
        Some(self.normalized_to_pixel(self.distort(m)))
    }

    /// Projects a camera-frame point; `None` when it is not projectable or
    /// lands outside the image.
    #[inline]
    pub fn project_camera(&self, p: &Vec3) -> Option<Pixel> {
        self.project_camera_unbounded(p)
            .filter(|px| self.contains(*px))
    }

    /// Projects a world point through `pose`.
    #[inline]
    pub fn project(&self, pose: &CameraPose, point_world: &Vec3) -> Option<Pixel> {
        self.project_camera(&pose.transform(point_world))
    }

    /// Unit ray in the camera frame whose projection is `px`.
    pub fn unproject(&self, px: Pixel) -> Result<Vec3> {
        let md = self.pixel_to_normalized(px);
        let [mx, my] = self
            .undistort(md)
            .ok_or(Error::UndistortNotConverged { u: px[0], v: px[1] })?;
        let r2 = mx * mx + my * my;
        let disc = 1.0 + (1.0 - self.xi * self.xi) * r2;
        if !(disc >= 0.0 && r2 < self.radial_limit_sq() && self.distortion_is_regular([mx, my])) {
            return Err(Error::OutsideValidCone { u: px[0], v: px[1] });
        }
        let lambda = (self.xi + disc.sqrt()) / (1.0 + r2);
        let ray = Vec3::new(lambda * mx, lambda * my, lambda - self.xi);
        Ok(ray / ray.norm())
    }
}

/// Rotation taking world vectors into the frame of a camera that looks
/// straight down with its `x` axis along world `+x` (image rows then run
/// along world `-y`, like a north-up raster).
pub fn nadir_rotation() -> Mat3 {
    Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll) * nadir`, with the elementary rotations
/// about the camera axes. Yaw therefore turns the camera about its principal
/// axis, and zero angles give the nadir view.
pub fn rotation_from_euler(roll: f64, pitch: f64, yaw: f64) -> Mat3 {
    let rz = Rotation3::from_axis_angle(&Vec3::z_axis(), yaw);
    let ry = Rotation3::from_axis_angle(&Vec3::y_axis(), pitch);
    let rx = Rotation3::from_axis_angle(&Vec3::x_axis(), roll);
    (rz * ry * rx).into_inner() * nadir_rotation()
}

/// Angle in radians of the relative rotation `a^T b`.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    // |A - B|_F = 2 sqrt(2) sin(angle / 2), well conditioned near zero.
    let chord = (a - b).norm() / (2.0 * core::f64::consts::SQRT_2);
    2.0 * chord.min(1.0).asin()
}

/// World-to-camera rigid transform `P_c = R * P_w + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    rotation: Mat3,
    translation: Vec3,
}

impl CameraPose {
    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if rotation
            .iter()
            .chain(translation.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidPose("non-finite entry"));
        }
        let gram = rotation.transpose() * rotation - Mat3::identity();
        if gram.abs().max() > Self::ORTHONORMAL_TOL {
            return Err(Error::InvalidPose("rotation is not orthonormal"));
        }
        if (rotation.determinant() - 1.0).abs() > Self::ORTHONORMAL_TOL {
            return Err(Error::InvalidPose("rotation has determinant != +1"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Mat3::identity(), Vec3::zeros())
    }

    /// Pose from roll/pitch/yaw (see [`rotation_from_euler`]) and the camera
    /// center in world coordinates.
    pub fn from_euler_center(roll: f64, pitch: f64, yaw: f64, center: Vec3) -> Self {
        let rotation = rotation_from_euler(roll, pitch, yaw);
        Self::from_parts_unchecked(rotation, -(rotation * center))
    }

    pub fn from_rotation_center(rotation: Mat3, center: Vec3) -> Result<Self> {
        Self::new(rotation, -(rotation * center))
    }

    /// Builds a pose from a (not necessarily normalized) quaternion `[w, x, y, z]`.
    pub fn from_quaternion_wxyz(q: [f64; 4], translation: Vec3) -> Result<Self> {
        let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        if !(quat.norm() > 0.0) {
            return Err(Error::InvalidPose("zero quaternion"));
        }
        let rot = UnitQuaternion::from_quaternion(quat).to_rotation_matrix();
        Self::new(rot.into_inner(), translation)
    }

    #[inline]
    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// `[roll, pitch, yaw]` in radians, inverse of [`CameraPose::from_euler_center`].
    pub fn euler(&self) -> [f64; 3] {
        let m = self.rotation * nadir_rotation().transpose();
        let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        [roll, pitch, yaw]
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        // canonical sign: w >= 0
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    #[inline]
    pub fn transform(&self, point_world: &Vec3) -> Vec3 {
        self.rotation * point_world + self.translation
    }

    pub fn inverse_transform(&self, point_camera: &Vec3) -> Vec3 {
        self.rotation.transpose() * (point_camera - self.translation)
    }

    /// Pose of a second camera rigidly attached to this one, where
    /// `P_other = rotation * P_self + translation`.
    pub fn then(&self, rotation: &Mat3, translation: &Vec3) -> Self {
        Self::from_parts_unchecked(
            rotation * self.rotation,
            rotation * self.translation + translation,
        )
    }

    /// Re-projects the rotation onto SO(3); used after numerical updates.
    pub(crate) fn orthonormalized(self) -> Self {
        let svd = nalgebra::SVD::new(self.rotation, true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return self;
        };
        let mut rot = u * v_t;
        if rot.determinant() < 0.0 {
            let mut fix = Mat3::identity();
            fix[(2, 2)] = -1.0;
            rot = u * fix * v_t;
        }
        Self::from_parts_unchecked(rot, self.translation)
    }
}
