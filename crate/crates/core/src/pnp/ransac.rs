//! P3P inside RANSAC on the virtual pinhole camera.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{p3p_solve, refine_pose, LiftedPair, PnpResult, RefineConfig};
use crate::camera::CameraPose;
use crate::rectify::{PinholeCamera, RectificationSpec};
use crate::{Error, Pixel, Result, Vec3};

/// Minimum number of inliers for an accepted pose.
pub const MIN_INLIERS: usize = 4;
/// Inlier-set re-estimation rounds after the final refinement.
const REESTIMATE_ROUNDS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Inlier threshold on the rectified reprojection error, pixels.
    pub threshold: f64,
    pub confidence: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 2.0,
            confidence: 0.999,
            max_iterations: 2000,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidRansacConfig("threshold must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidRansacConfig("confidence must be in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidRansacConfig(
                "max_iterations must be positive",
            ));
        }
        Ok(())
    }
}

/// Rectified reprojection error of one pair; infinite behind the camera.
pub(crate) fn pair_error(
    pose: &CameraPose,
    camera: &PinholeCamera,
    px: Pixel,
    world: &Vec3,
) -> f64 {
    match camera.project(&pose.transform(world)) {
        Some(p) => ((p[0] - px[0]).powi(2) + (p[1] - px[1]).powi(2)).sqrt(),
        None => f64::INFINITY,
    }
}

struct Consensus {
    inliers: Vec<usize>,
    mean_error: f64,
}

fn consensus(
    pose: &CameraPose,
    pairs: &[LiftedPair],
    camera: &PinholeCamera,
    threshold: f64,
) -> Consensus {
    let mut inliers = Vec::new();
    let mut sum = 0.0;
    for (i, p) in pairs.iter().enumerate() {
        let e = pair_error(pose, camera, p.rect, &p.world);
        if e <= threshold {
            inliers.push(i);
            sum += e;
        }
    }
    let mean_error = if inliers.is_empty() {
        f64::INFINITY
    } else {
        sum / inliers.len() as f64
    };
    Consensus {
        inliers,
        mean_error,
    }
}

fn iterations_needed(inlier_ratio: f64, confidence: f64) -> f64 {
    let all_good = inlier_ratio.powi(3);
    if all_good >= 1.0 {
        return 1.0;
    }
    if all_good <= 0.0 {
        return f64::INFINITY;
    }
    ((1.0 - confidence).ln() / (1.0 - all_good).ln()).ceil()
}

fn sample_three(rng: &mut ChaCha8Rng, n: usize) -> [usize; 3] {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut c = rng.random_range(0..n - 2);
    if c >= lo {
        c += 1;
    }
    if c >= hi {
        c += 1;
    }
    [a, b, c]
}

/// Robust pose of the fisheye camera from lifted pairs observed in the
/// rectified view described by `spec`.
pub fn ransac_pnp(
    pairs: &[LiftedPair],
    spec: &RectificationSpec,
    config: &RansacConfig,
) -> Result<PnpResult> {
    config.validate()?;
    spec.validate()?;
    if pairs.len() < MIN_INLIERS {
        return Err(Error::TooFewCorrespondences {
            required: MIN_INLIERS,
            found: pairs.len(),
        });
    }
    let camera = spec.pinhole();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(CameraPose, Consensus)> = None;
    let mut limit = config.max_iterations as f64;
    let mut iterations = 0usize;

    while (iterations as f64) < limit {
        iterations += 1;
        let idx = sample_three(&mut rng, pairs.len());
        let pixels = idx.map(|i| pairs[i].rect);
        let world = idx.map(|i| pairs[i].world);
        let Ok(candidates) = p3p_solve(&pixels, &world, &camera) else {
            continue;
        };
        for pose in candidates {
            let c = consensus(&pose, pairs, &camera, config.threshold);
            let better = match &best {
                None => !c.inliers.is_empty(),
                Some((_, b)) => {
                    c.inliers.len() > b.inliers.len()
                        || (c.inliers.len() == b.inliers.len() && c.mean_error < b.mean_error)
                }
            };
            if better {
                let ratio = c.inliers.len() as f64 / pairs.len() as f64;
                limit =
                    iterations_needed(ratio, config.confidence).min(config.max_iterations as f64);
                best = Some((pose, c));
            }
        }
    }

    let found = best.as_ref().map_or(0, |(_, c)| c.inliers.len());
    let Some((mut pose, mut cons)) = best.filter(|(_, c)| c.inliers.len() >= MIN_INLIERS) else {
        return Err(Error::RansacFailed {
            best_inliers: found,
            iterations,
        });
    };

    let refine = RefineConfig::default();
    for _ in 0..REESTIMATE_ROUNDS {
        let subset: Vec<(Pixel, Vec3)> = cons
            .inliers
            .iter()
            .map(|&i| (pairs[i].rect, pairs[i].world))
            .collect();
        let refined = refine_pose(&pose, &subset, &camera, &refine);
        let next = consensus(&refined, pairs, &camera, config.threshold);
        if next.inliers.len() < MIN_INLIERS {
            break;
        }
        let stable = next.inliers == cons.inliers;
        pose = refined;
        cons = next;
        if stable {
            break;
        }
    }

    Ok(PnpResult {
        pose: spec.fisheye_pose(&pose),
        virtual_pose: pose,
        inliers: cons.inliers,
        mean_error: cons.mean_error,
        iterations,
    })
}
