//! Reprojection error of annotated check points.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::{Pixel, Vec3};

/// World point with its annotated fisheye pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckPoint {
    pub world: Vec3,
    pub pixel: Pixel,
}

/// Per-point pixel error; `None` when the point is not projectable. Points
/// projecting outside the image still get an error.
pub fn reprojection_errors(
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    checks: &[CheckPoint],
) -> Vec<Option<f64>> {
    checks
        .iter()
        .map(|c| {
            intrinsics
                .project_camera_unbounded(&pose.transform(&c.world))
                .map(|p| (p[0] - c.pixel[0]).hypot(p[1] - c.pixel[1]))
        })
        .collect()
}

/// Mean over the projectable points; `None` if there are none.
pub fn mean_error(errors: &[Option<f64>]) -> Option<f64> {
    let valid: Vec<f64> = errors.iter().flatten().copied().collect();
    (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_annotations_have_zero_error() {
        let intr = CameraIntrinsics::new(300.0, 300.0, 199.5, 199.5, 1.2, 400, 400);
        let pose = CameraPose::from_euler_center(0.0, 0.0, 0.3, Vec3::new(0.0, 0.0, 6.0));
        let checks: Vec<CheckPoint> = [Vec3::new(1.0, 2.0, 0.0), Vec3::new(-3.0, 0.5, 0.0)]
            .iter()
            .map(|&w| CheckPoint {
                world: w,
                pixel: intr.project(&pose, &w).unwrap(),
            })
            .collect();
        let errs = reprojection_errors(&intr, &pose, &checks);
        assert_eq!(mean_error(&errs), Some(0.0));
        let shifted = [CheckPoint {
            pixel: [checks[0].pixel[0] + 3.0, checks[0].pixel[1] + 4.0],
            ..checks[0]
        }];
        let e = mean_error(&reprojection_errors(&intr, &pose, &shifted)).unwrap();
        assert!((e - 5.0).abs() < 1e-9);
        assert_eq!(mean_error(&[None]), None);
    }
}
