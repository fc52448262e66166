//! Sampling camera intensities at projected LiDAR points and scoring a pose.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::histogram::{Entropies, MiWorkspace};
use crate::camera::{rotation_from_euler, CameraIntrinsics, CameraPose};
use crate::image::{quantize, GrayImage};
use crate::map::LidarPoint;
use crate::{Error, Mat3, Result, Vec3};

/// Search variables: camera center in world coordinates and yaw (radians).
/// Roll and pitch are held fixed during the search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Theta {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { x, y, z, yaw }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.yaw]
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Search variables of a pose, plus its `[roll, pitch]`.
    pub fn from_pose(pose: &CameraPose) -> (Self, [f64; 2]) {
        let [roll, pitch, yaw] = pose.euler();
        let c = pose.center();
        (Self::new(c.x, c.y, c.z, yaw), [roll, pitch])
    }

    pub fn to_pose(&self, roll_pitch: [f64; 2]) -> CameraPose {
        CameraPose::from_euler_center(roll_pitch[0], roll_pitch[1], self.yaw, self.center())
    }

    pub(crate) fn offset(&self, d: [f64; 4]) -> Self {
        Self::new(self.x + d[0], self.y + d[1], self.z + d[2], self.yaw + d[3])
    }

    pub(crate) fn distance_sq(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Score of one pose hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEvaluation {
    pub theta: Theta,
    /// Number of LiDAR points that projected into the image.
    pub n_points: usize,
    pub h_x: f64,
    pub h_y: f64,
    pub h_xy: f64,
    /// Mutual information in nats; `-inf` when the evaluation is invalid.
    pub mi: f64,
    /// At least `min_points` points were co-observed.
    pub valid: bool,
}

impl MiEvaluation {
    fn new(theta: Theta, n_points: usize, entropies: Option<Entropies>, min_points: usize) -> Self {
        let valid = n_points >= min_points && entropies.is_some();
        let e = entropies.unwrap_or(Entropies {
            h_x: 0.0,
            h_y: 0.0,
            h_xy: 0.0,
            mi: 0.0,
        });
        Self {
            theta,
            n_points,
            h_x: e.h_x,
            h_y: e.h_y,
            h_xy: e.h_xy,
            mi: if valid { e.mi } else { f64::NEG_INFINITY },
            valid,
        }
    }
}

fn check_image(image: &GrayImage, intrinsics: &CameraIntrinsics) -> Result<()> {
    if image.dimensions() != (intrinsics.width, intrinsics.height) {
        return Err(Error::DimensionMismatch {
            expected_w: intrinsics.width,
            expected_h: intrinsics.height,
            found_w: image.width(),
            found_h: image.height(),
        });
    }
    Ok(())
}

/// `(reflectivity, camera intensity)` for every point that projects into the
/// image, in point order. Intensities are bilinearly sampled and rounded.
pub fn sample_intensities(
    image: &GrayImage,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    points: &[LidarPoint],
) -> Result<Vec<(u8, u8)>> {
    check_image(image, intrinsics)?;
    Ok(points
        .iter()
        .filter_map(|p| {
            let px = intrinsics.project(pose, &p.position())?;
            let g = image.bilinear(px[0], px[1])?;
            Some((p.reflectivity, quantize(g)))
        })
        .collect())
}

/// Mutual-information objective over [`Theta`] with roll and pitch fixed.
///
/// Points are pre-rotated by the roll/pitch part of the rotation so each
/// evaluation only applies a translation and a rotation about the vertical.
pub struct MiObjective<'a> {
    image: &'a GrayImage,
    intrinsics: CameraIntrinsics,
    roll_pitch: [f64; 2],
    tilt: Mat3,
    tilted: Vec<Vec3>,
    reflectivity: Vec<u8>,
    min_points: usize,
}

impl<'a> MiObjective<'a> {
    pub fn new(
        image: &'a GrayImage,
        intrinsics: &CameraIntrinsics,
        points: &[LidarPoint],
        roll_pitch: [f64; 2],
        min_points: usize,
    ) -> Result<Self> {
        check_image(image, intrinsics)?;
        // rotation_from_euler(roll, pitch, yaw) = Rz(yaw) * tilt
        let tilt = rotation_from_euler(roll_pitch[0], roll_pitch[1], 0.0);
        Ok(Self {
            image,
            intrinsics: *intrinsics,
            roll_pitch,
            tilt,
            tilted: points.iter().map(|p| tilt * p.position()).collect(),
            reflectivity: points.iter().map(|p| p.reflectivity).collect(),
            min_points,
        })
    }

    pub fn roll_pitch(&self) -> [f64; 2] {
        self.roll_pitch
    }

    pub fn min_points(&self) -> usize {
        self.min_points
    }

    pub fn point_count(&self) -> usize {
        self.tilted.len()
    }

    pub fn pose(&self, theta: &Theta) -> CameraPose {
        theta.to_pose(self.roll_pitch)
    }

    pub fn evaluate(&self, theta: &Theta, ws: &mut MiWorkspace) -> MiEvaluation {
        ws.clear();
        let c = self.tilt * theta.center();
        let (s, co) = theta.yaw.sin_cos();
        let img = self.image;
        let limit = self.intrinsics.radial_limit_sq();
        for (q, &refl) in self.tilted.iter().zip(&self.reflectivity) {
            let v = q - c;
            let p = Vec3::new(co * v.x - s * v.y, s * v.x + co * v.y, v.z);
            if let Some(px) = self
                .intrinsics
                .project_within(&p, limit)
                .filter(|px| self.intrinsics.contains(*px))
            {
                ws.add(refl, quantize(img.bilinear_unchecked(px[0], px[1])));
            }
        }
        let n = ws.len();
        let entropies = if n >= self.min_points {
            ws.finish()
        } else {
            ws.clear();
            None
        };
        MiEvaluation::new(*theta, n, entropies, self.min_points)
    }
}

/// One-off evaluation of the objective at `theta`.
pub fn evaluate_pose(
    theta: &Theta,
    roll_pitch: [f64; 2],
    image: &GrayImage,
    intrinsics: &CameraIntrinsics,
    points: &[LidarPoint],
    min_points: usize,
) -> Result<MiEvaluation> {
    let objective = MiObjective::new(image, intrinsics, points, roll_pitch, min_points)?;
    Ok(objective.evaluate(theta, &mut MiWorkspace::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mi::histogram::{mutual_information, IntensityHistogram};

    fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(80.0, 80.0, 49.5, 49.5, 1.2, 100, 100)
            .with_distortion(-0.01, 0.002, 0.0003, -0.0002)
    }

    fn points() -> Vec<LidarPoint> {
        let mut pts = Vec::new();
        for i in -40..=40 {
            for j in -40..=40 {
                let (x, y) = (i as f64 * 0.25, j as f64 * 0.25);
                let r = ((i * 7 + j * 13_i32).rem_euclid(5) * 50) as u8;
                pts.push(LidarPoint::new(x, y, 0.02 * x, r));
            }
        }
        pts
    }

    fn image() -> GrayImage {
        GrayImage::from_fn(100, 100, |x, y| ((x * 3 + y * 5) % 256) as u8)
    }

    #[test]
    fn fast_path_matches_generic_projection() {
        let (img, intr, pts) = (image(), intrinsics(), points());
        let theta = Theta::new(0.3, -0.4, 5.0, 0.7);
        let rp = [0.02, -0.015];
        let objective = MiObjective::new(&img, &intr, &pts, rp, 10).unwrap();
        let fast = objective.evaluate(&theta, &mut MiWorkspace::new());
        let samples = sample_intensities(&img, &intr, &theta.to_pose(rp), &pts).unwrap();
        let slow = mutual_information(&IntensityHistogram::from_samples(&samples)).unwrap();
        assert_eq!(fast.n_points, samples.len());
        assert!((fast.mi - slow.mi).abs() < 1e-9);
        assert!((fast.h_xy - slow.h_xy).abs() < 1e-9);
        assert!(fast.valid);
    }

    #[test]
    fn too_few_points_is_invalid() {
        let (img, intr, pts) = (image(), intrinsics(), points());
        let e = evaluate_pose(
            &Theta::new(0.0, 0.0, 5.0, 0.0),
            [0.0, 0.0],
            &img,
            &intr,
            &pts[..100],
            500,
        )
        .unwrap();
        assert!(!e.valid);
        assert_eq!(e.mi, f64::NEG_INFINITY);
        assert_eq!(e.n_points, 100);
    }

    #[test]
    fn dimension_mismatch() {
        let img = GrayImage::new(99, 100);
        assert!(matches!(
            sample_intensities(&img, &intrinsics(), &CameraPose::identity(), &points()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn theta_pose_round_trip() {
        let t = Theta::new(1.0, -2.0, 6.5, -2.9);
        let (back, rp) = Theta::from_pose(&t.to_pose([0.01, 0.02]));
        assert!(back.distance_sq(&t) < 1e-20);
        assert!((rp[0] - 0.01).abs() < 1e-12 && (rp[1] - 0.02).abs() < 1e-12);
    }
}
