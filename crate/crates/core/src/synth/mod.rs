//! Synthetic scenes with known ground truth for end-to-end checks.

mod correspond;
mod render;
mod scene;
mod trials;

pub use correspond::{
    check_points, default_spec, fabricate_correspondences, FabricatedMatches, FabricationParams,
};
pub use render::{render_fisheye, render_view, Ground};
pub use scene::{
    generate_scene, HeightField, Photometric, RenderNoise, SceneStyle, SyntheticScene,
    STANDARD_EXTENT,
};
pub use trials::{
    final_step, perturbed_start, robustness_trial_suite, run_trial, summarize, trial_seed,
    wrap_angle, TrialConfig, TrialOutcome, TrialSummary,
};
