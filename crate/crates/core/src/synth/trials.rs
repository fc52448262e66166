//! Monte Carlo robustness study of the grid search from perturbed starts.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::SyntheticScene;
use crate::image::GrayImage;
use crate::mi::{grid_search, GridExecutor, GridSearchConfig, Theta};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trials: usize,
    /// Initial guesses are drawn uniformly in `gt +- perturbation`, `[x, y, z, yaw]`.
    pub perturbation: [f64; 4],
    pub grid: GridSearchConfig,
    pub seed: u64,
    /// A trial converged if its final translation error is at most this, meters.
    pub translation_tolerance: f64,
    /// ... and its absolute yaw error at most this, radians.
    pub yaw_tolerance: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            perturbation: [1.0, 1.0, 0.3, 5f64.to_radians()],
            grid: GridSearchConfig::default(),
            seed: 0,
            translation_tolerance: 0.2,
            yaw_tolerance: 0.5f64.to_radians(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub index: usize,
    pub initial: Theta,
    pub refined: Theta,
    pub mi: f64,
    /// Refined minus ground truth, `[x, y, z, yaw]`; yaw wrapped to `(-pi, pi]`.
    pub error: [f64; 4],
    pub translation_error: f64,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    pub mean_translation_error: f64,
    pub mean_abs_yaw_error: f64,
    /// Pooled standard deviation of the x/y/z errors, each divided by its
    /// final grid step.
    pub translation_dispersion: f64,
    /// Standard deviation of the yaw errors divided by the final yaw step.
    pub yaw_dispersion: f64,
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let w = a - two_pi * (a / two_pi).round();
    if w <= -core::f64::consts::PI {
        w + two_pi
    } else {
        w
    }
}

/// Seed of trial `index`, independent of execution order.
pub fn trial_seed(suite_seed: u64, index: usize) -> u64 {
    suite_seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index as u64)
        .rotate_left(17)
}

/// Initial guess of one trial.
pub fn perturbed_start(gt: &Theta, perturbation: &[f64; 4], seed: u64) -> Theta {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = [0.0; 4];
    for (k, b) in perturbation.iter().enumerate() {
        if *b > 0.0 {
            d[k] = rng.random_range(-*b..=*b);
        }
    }
    gt.offset(d)
}

/// Runs one trial; roll and pitch are fixed to ground truth.
pub fn run_trial(
    scene: &SyntheticScene,
    image: &GrayImage,
    config: &TrialConfig,
    index: usize,
    executor: &impl GridExecutor,
) -> Result<TrialOutcome> {
    let (gt, gt_rp) = Theta::from_pose(&scene.gt_pose);
    let initial = perturbed_start(&gt, &config.perturbation, trial_seed(config.seed, index));
    let grid = GridSearchConfig {
        roll_pitch: Some(gt_rp),
        ..config.grid
    };
    let result = grid_search(
        &initial.to_pose(gt_rp),
        &grid,
        image,
        scene.intrinsics(),
        &scene.map.lidar,
        executor,
    )?;
    let refined = result.best.theta;
    let error = [
        refined.x - gt.x,
        refined.y - gt.y,
        refined.z - gt.z,
        wrap_angle(refined.yaw - gt.yaw),
    ];
    let translation_error =
        (error[0] * error[0] + error[1] * error[1] + error[2] * error[2]).sqrt();
    Ok(TrialOutcome {
        index,
        initial,
        refined,
        mi: result.best.mi,
        error,
        translation_error,
        converged: translation_error <= config.translation_tolerance
            && error[3].abs() <= config.yaw_tolerance,
    })
}

/// Statistics over finished trials. `final_step` is the grid step of the last stage.
pub fn summarize(outcomes: &[TrialOutcome], final_step: &[f64; 4]) -> TrialSummary {
    let n = outcomes.len();
    let nf = n.max(1) as f64;
    let std = |k: usize| {
        let mean = outcomes.iter().map(|o| o.error[k]).sum::<f64>() / nf;
        let var = outcomes
            .iter()
            .map(|o| (o.error[k] - mean).powi(2))
            .sum::<f64>()
            / nf;
        var.sqrt()
    };
    let pooled = ((0..3)
        .map(|k| (std(k) / final_step[k]).powi(2))
        .sum::<f64>()
        / 3.0)
        .sqrt();
    let converged = outcomes.iter().filter(|o| o.converged).count();
    TrialSummary {
        trials: n,
        converged,
        convergence_rate: converged as f64 / nf,
        mean_translation_error: outcomes.iter().map(|o| o.translation_error).sum::<f64>() / nf,
        mean_abs_yaw_error: outcomes.iter().map(|o| o.error[3].abs()).sum::<f64>() / nf,
        translation_dispersion: pooled,
        yaw_dispersion: std(3) / final_step[3],
    }
}

/// Step of the last grid stage.
pub fn final_step(grid: &GridSearchConfig) -> [f64; 4] {
    let k = grid.stages.saturating_sub(1) as i32;
    core::array::from_fn(|d| grid.step[d] / grid.shrink.powi(k))
}

/// Runs all trials in index order.
pub fn robustness_trial_suite(
    scene: &SyntheticScene,
    image: &GrayImage,
    config: &TrialConfig,
    executor: &impl GridExecutor,
) -> Result<(Vec<TrialOutcome>, TrialSummary)> {
    if config.trials == 0 {
        return Err(Error::InvalidGridConfig("at least one trial is required"));
    }
    let outcomes = (0..config.trials)
        .map(|i| run_trial(scene, image, config, i, executor))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&outcomes, &final_step(&config.grid));
    Ok((outcomes, summary))
}
