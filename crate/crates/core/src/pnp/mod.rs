//! Initial pose from rectified-image / satellite correspondences.
//!
//! Satellite pixels are lifted to 3D through the raster georeferencing and the
//! LiDAR ground height. The pose of the virtual rectified camera is then found
//! with P3P inside RANSAC, refined by Levenberg-Marquardt on the inliers and
//! rotated back into the fisheye camera frame.

mod p3p;
mod ransac;
mod refine;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::map::{LidarGroundMap, SatelliteMap};
use crate::{Error, Pixel, Result, Vec3};

pub use p3p::{p3p_solve, p3p_solve_bearings, MIN_TRIANGLE_AREA};
pub use ransac::{ransac_pnp, RansacConfig, MIN_INLIERS};
pub use refine::{refine_pose, RefineConfig};

/// One match between the rectified fisheye image and the cropped satellite raster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub rect: Pixel,
    pub sat: Pixel,
    /// Ground-truth inlier label, only known for fabricated matches.
    pub inlier: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self> {
        let set = Self { pairs };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .pairs
            .iter()
            .any(|c| !(c.rect.iter().chain(c.sat.iter()).all(|v| v.is_finite())))
        {
            return Err(Error::InvalidMap(
                "correspondence with non-finite coordinates".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Rectified pixel paired with its 3D world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftedPair {
    pub rect: Pixel,
    pub world: Vec3,
    /// Set when no LiDAR height was available and `z = 0` was used.
    pub height_fallback: bool,
}

/// Satellite pixel -> world `(x, y)`; `z` from the LiDAR ground height.
pub fn lift_correspondences(
    matches: &CorrespondenceSet,
    sat: &SatelliteMap,
    lidar: &LidarGroundMap,
) -> Result<Vec<LiftedPair>> {
    if matches.is_empty() {
        return Err(Error::TooFewCorrespondences {
            required: 1,
            found: 0,
        });
    }
    Ok(matches
        .pairs
        .iter()
        .map(|c| {
            let [x, y] = sat.pixel_to_world(c.sat);
            let (z, height_fallback) = match lidar.ground_height_at([x, y]) {
                Ok(z) => (z, false),
                Err(_) => (0.0, true),
            };
            LiftedPair {
                rect: c.rect,
                world: Vec3::new(x, y, z),
                height_fallback,
            }
        })
        .collect())
}

/// Outcome of [`ransac_pnp`].
#[derive(Clone, Debug, PartialEq)]
pub struct PnpResult {
    /// Pose of the fisheye camera in the world frame.
    pub pose: CameraPose,
    /// Pose of the virtual rectified camera.
    pub virtual_pose: CameraPose,
    pub inliers: Vec<usize>,
    /// Mean reprojection error of the inliers in the rectified image, pixels.
    pub mean_error: f64,
    pub iterations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;
    use crate::map::LidarPoint;
    use alloc::vec;

    fn maps(slope: f64) -> (SatelliteMap, LidarGroundMap) {
        let sat = SatelliteMap::new(GrayImage::new(100, 100), 0.1, [0.0, 0.0]).unwrap();
        let mut pts = Vec::new();
        for i in -20..120 {
            for j in -120..20 {
                let (x, y) = (i as f64 * 0.1, j as f64 * 0.1);
                pts.push(LidarPoint::new(x, y, slope * x, 0));
            }
        }
        (sat, LidarGroundMap::new(pts).unwrap())
    }

    fn set(sat: &[Pixel]) -> CorrespondenceSet {
        CorrespondenceSet::new(
            sat.iter()
                .map(|&s| Correspondence {
                    rect: [1.0, 2.0],
                    sat: s,
                    inlier: None,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn lifting_uses_scale_and_height() {
        let (sat, flat) = maps(0.0);
        let lifted = lift_correspondences(&set(&[[0.0, 0.0], [10.0, 0.0]]), &sat, &flat).unwrap();
        assert_eq!(lifted[0].world, Vec3::zeros());
        assert!((lifted[1].world - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        assert!(!lifted[1].height_fallback);

        let (sat, plane) = maps(0.01);
        let lifted =
            lift_correspondences(&set(&[[37.3, 12.9], [55.5, 80.1]]), &sat, &plane).unwrap();
        for p in lifted {
            assert!((p.world.z - 0.01 * p.world.x).abs() < 1e-3);
        }
    }

    #[test]
    fn off_map_falls_back_to_zero() {
        let (sat, flat) = maps(0.02);
        let lifted = lift_correspondences(&set(&[[900.0, 900.0]]), &sat, &flat).unwrap();
        assert!(lifted[0].height_fallback);
        assert_eq!(lifted[0].world.z, 0.0);
    }

    #[test]
    fn empty_and_invalid_sets() {
        let (sat, flat) = maps(0.0);
        assert!(lift_correspondences(&CorrespondenceSet::default(), &sat, &flat).is_err());
        assert!(CorrespondenceSet::new(vec![Correspondence {
            rect: [f64::NAN, 0.0],
            sat: [0.0, 0.0],
            inlier: None
        }])
        .is_err());
    }
}
