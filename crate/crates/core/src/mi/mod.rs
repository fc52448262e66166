//! Pose refinement by maximizing the mutual information between LiDAR
//! reflectivity and camera intensities.

mod grid;
mod histogram;
mod objective;

pub use grid::{
    axis_offsets, grid_cells, grid_search, grid_search_points, mi_slices, select_best,
    GridExecutor, GridSearchConfig, GridSearchResult, MiSlice, Sequential, StageResult,
};
pub use histogram::{mutual_information, Entropies, IntensityHistogram, MiWorkspace, BINS};
pub use objective::{evaluate_pose, sample_intensities, MiEvaluation, MiObjective, Theta};
