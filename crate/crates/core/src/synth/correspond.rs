//! Correspondences and check points with known ground truth.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scene::SyntheticScene;
use crate::eval::CheckPoint;
use crate::map::{stride_subsample, GpsInit, SatelliteMap};
use crate::pnp::{Correspondence, CorrespondenceSet};
use crate::rectify::RectificationSpec;
use crate::{Error, Result};

/// Corners closer than this to the rectified image border are not used, pixels.
const BORDER_MARGIN: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricationParams {
    pub count: usize,
    pub outlier_fraction: f64,
    /// Standard deviation of the Gaussian noise added to both pixel sets.
    pub pixel_noise: f64,
    /// Satellite crop the matches refer to.
    pub gps: GpsInit,
    pub spec: RectificationSpec,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FabricatedMatches {
    pub matches: CorrespondenceSet,
    pub crop: SatelliteMap,
}

/// Uniform index shuffle driven by `rng`.
fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Marking corners seen by the rectified view, with noisy pixels and a share
/// of satellite coordinates replaced by random in-crop positions.
pub fn fabricate_correspondences(
    scene: &SyntheticScene,
    params: &FabricationParams,
) -> Result<FabricatedMatches> {
    if params.count < 4 {
        return Err(Error::TooFewCorrespondences {
            required: 4,
            found: params.count,
        });
    }
    if !(0.0..=1.0).contains(&params.outlier_fraction) || !(params.pixel_noise >= 0.0) {
        return Err(Error::InvalidScene(
            "outlier fraction or pixel noise out of range",
        ));
    }
    params.spec.validate()?;
    let crop = scene.map.satellite.crop(&params.gps)?;
    let pinhole = params.spec.pinhole();
    let virtual_pose = params.spec.virtual_pose(&scene.gt_pose);
    let (cw, ch) = crop.raster().dimensions();

    let mut visible: Vec<(usize, [f64; 2], [f64; 2])> = Vec::new();
    for (k, corner) in scene.corners.iter().enumerate() {
        let Some(rect) = pinhole.project(&virtual_pose.transform(corner)) else {
            continue;
        };
        let inside = rect[0] >= BORDER_MARGIN
            && rect[1] >= BORDER_MARGIN
            && rect[0] <= pinhole.width as f64 - 1.0 - BORDER_MARGIN
            && rect[1] <= pinhole.height as f64 - 1.0 - BORDER_MARGIN;
        let sat = crop.world_to_pixel([corner.x, corner.y]);
        if inside && crop.raster().contains(sat[0], sat[1]) {
            visible.push((k, rect, sat));
        }
    }
    if visible.len() < params.count {
        return Err(Error::NotEnoughCorners {
            required: params.count,
            available: visible.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    shuffle(&mut visible, &mut rng);
    visible.truncate(params.count);
    let outliers = (params.outlier_fraction * params.count as f64).round() as usize;
    let gauss =
        Normal::new(0.0, params.pixel_noise).map_err(|_| Error::InvalidScene("pixel noise"))?;
    let noisy = |rng: &mut ChaCha8Rng, p: [f64; 2]| {
        if params.pixel_noise > 0.0 {
            [p[0] + gauss.sample(rng), p[1] + gauss.sample(rng)]
        } else {
            p
        }
    };
    let mut pairs: Vec<(usize, Correspondence)> = Vec::with_capacity(params.count);
    for (i, &(k, rect, sat)) in visible.iter().enumerate() {
        let rect = noisy(&mut rng, rect);
        let sat = noisy(&mut rng, sat);
        let (sat, inlier) = if i < outliers {
            let random = [
                rng.random_range(0.0..=(cw - 1) as f64),
                rng.random_range(0.0..=(ch - 1) as f64),
            ];
            (random, false)
        } else {
            (sat, true)
        };
        pairs.push((
            k,
            Correspondence {
                rect,
                sat,
                inlier: Some(inlier),
            },
        ));
    }
    pairs.sort_by_key(|(k, _)| *k);
    Ok(FabricatedMatches {
        matches: CorrespondenceSet::new(pairs.into_iter().map(|(_, c)| c).collect())?,
        crop,
    })
}

/// Marking corners inside the fisheye image with their exact ground-truth
/// pixels, thinned to at most `max_count`.
pub fn check_points(scene: &SyntheticScene, max_count: usize) -> Vec<CheckPoint> {
    let intr = scene.intrinsics();
    let all: Vec<CheckPoint> = scene
        .corners
        .iter()
        .filter_map(|&world| {
            intr.project(&scene.gt_pose, &world)
                .map(|pixel| CheckPoint { world, pixel })
        })
        .collect();
    stride_subsample(&all, max_count)
}

/// Default rectified view for a scene camera.
pub fn default_spec(scene: &SyntheticScene) -> RectificationSpec {
    RectificationSpec::default_for(scene.intrinsics())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::scene::{generate_scene, SceneStyle, STANDARD_EXTENT};

    fn params(
        scene: &SyntheticScene,
        count: usize,
        outliers: f64,
        noise: f64,
    ) -> FabricationParams {
        let c = scene.gt_pose.center();
        FabricationParams {
            count,
            outlier_fraction: outliers,
            pixel_noise: noise,
            gps: GpsInit::new(c.x, c.y, 15.0).unwrap(),
            spec: default_spec(scene),
            seed: 9,
        }
    }

    #[test]
    fn labels_and_counts() {
        let scene = generate_scene(3, STANDARD_EXTENT, &SceneStyle::standard()).unwrap();
        let f = fabricate_correspondences(&scene, &params(&scene, 30, 0.3, 0.5)).unwrap();
        assert_eq!(f.matches.len(), 30);
        let outliers = f
            .matches
            .pairs
            .iter()
            .filter(|c| c.inlier == Some(false))
            .count();
        assert_eq!(outliers, 9);
    }

    #[test]
    fn count_below_four() {
        let scene = generate_scene(3, STANDARD_EXTENT, &SceneStyle::standard()).unwrap();
        assert!(matches!(
            fabricate_correspondences(&scene, &params(&scene, 3, 0.0, 0.0)),
            Err(Error::TooFewCorrespondences { .. })
        ));
        assert!(matches!(
            fabricate_correspondences(&scene, &params(&scene, 100_000, 0.0, 0.0)),
            Err(Error::NotEnoughCorners { .. })
        ));
    }

    #[test]
    fn check_points_are_exact() {
        let scene = generate_scene(4, STANDARD_EXTENT, &SceneStyle::standard()).unwrap();
        let checks = check_points(&scene, 50);
        assert!(checks.len() >= 20);
        for c in checks {
            let p = scene
                .intrinsics()
                .project(&scene.gt_pose, &c.world)
                .unwrap();
            assert_eq!(p, c.pixel);
        }
    }
}
