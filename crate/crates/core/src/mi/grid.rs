//! Exhaustive coarse-to-fine grid search over [`Theta`].

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::histogram::MiWorkspace;
use super::objective::{MiEvaluation, MiObjective, Theta};
use crate::camera::{CameraIntrinsics, CameraPose};
use crate::image::GrayImage;
use crate::map::{LidarGroundMap, LidarPoint};
use crate::{Error, Result};

/// Search box and resolution. Angles are in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchConfig {
    /// Half-width of the first-stage box around the initial guess, `[x, y, z, yaw]`.
    pub half_range: [f64; 4],
    /// First-stage grid step, `[x, y, z, yaw]`.
    pub step: [f64; 4],
    pub stages: usize,
    /// Each stage spans one previous step and divides the step by this factor.
    pub shrink: f64,
    /// Fewer co-observed points than this make a cell invalid.
    pub min_points: usize,
    /// LiDAR points are taken within this radius of the initial camera center.
    pub point_radius: f64,
    /// Upper bound on the LiDAR points used, see [`LidarGroundMap::query_ground_points`].
    pub max_points: usize,
    /// Fixed `[roll, pitch]`; taken from the initial pose when unset.
    pub roll_pitch: Option<[f64; 2]>,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self {
            half_range: [2.0, 2.0, 0.5, 5f64.to_radians()],
            step: [0.2, 0.2, 0.1, 0.5f64.to_radians()],
            stages: 2,
            shrink: 5.0,
            min_points: 500,
            point_radius: 40.0,
            max_points: 1500,
            roll_pitch: None,
        }
    }
}

impl GridSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidGridConfig("steps must be positive"));
        }
        if self
            .half_range
            .iter()
            .any(|h| !(h.is_finite() && *h >= 0.0))
        {
            return Err(Error::InvalidGridConfig("half ranges must be non-negative"));
        }
        if self.stages == 0 {
            return Err(Error::InvalidGridConfig("at least one stage is required"));
        }
        if !(self.shrink.is_finite() && self.shrink >= 1.0) {
            return Err(Error::InvalidGridConfig("shrink factor must be >= 1"));
        }
        if !(self.point_radius.is_finite() && self.point_radius > 0.0) {
            return Err(Error::InvalidGridConfig("point radius must be positive"));
        }
        if self.max_points == 0 {
            return Err(Error::InvalidGridConfig("max_points must be positive"));
        }
        if let Some(rp) = self.roll_pitch {
            if !(rp[0].is_finite() && rp[1].is_finite()) {
                return Err(Error::InvalidGridConfig("roll and pitch must be finite"));
            }
        }
        Ok(())
    }

    /// LiDAR points used for a search started at `init`.
    pub fn select_points(&self, lidar: &LidarGroundMap, init: &CameraPose) -> Vec<LidarPoint> {
        let c = init.center();
        lidar.query_ground_points([c.x, c.y], self.point_radius, self.max_points)
    }
}

/// Offsets `i * step` for `i` in `-n..=n` with `n = round(half_range / step)`.
pub fn axis_offsets(half_range: f64, step: f64) -> Vec<f64> {
    let n = (half_range / step).round() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

/// Evaluates the objective on a list of cells. Implementations may run in
/// parallel but must return results in cell order.
pub trait GridExecutor {
    fn evaluate(&self, objective: &MiObjective<'_>, cells: &[Theta]) -> Vec<MiEvaluation>;
}

/// Single-threaded executor.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl GridExecutor for Sequential {
    fn evaluate(&self, objective: &MiObjective<'_>, cells: &[Theta]) -> Vec<MiEvaluation> {
        let mut ws = MiWorkspace::new();
        cells
            .iter()
            .map(|t| objective.evaluate(t, &mut ws))
            .collect()
    }
}

/// One stage of the coarse-to-fine search.
#[derive(Clone, Debug, PartialEq)]
pub struct StageResult {
    pub center: Theta,
    pub half_range: [f64; 4],
    pub step: [f64; 4],
    /// Every cell in lexicographic `[x, y, z, yaw]` order.
    pub evaluations: Vec<MiEvaluation>,
    pub best: MiEvaluation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchResult {
    pub pose: CameraPose,
    pub best: MiEvaluation,
    /// Objective at the initial guess.
    pub initial: MiEvaluation,
    pub roll_pitch: [f64; 2],
    pub points_used: usize,
    pub stages: Vec<StageResult>,
}

impl GridSearchResult {
    pub fn evaluations(&self) -> usize {
        self.stages.iter().map(|s| s.evaluations.len()).sum()
    }
}

/// Cells of the box `center +- half_range` in lexicographic order.
pub fn grid_cells(center: &Theta, half_range: &[f64; 4], step: &[f64; 4]) -> Vec<Theta> {
    let axes: Vec<Vec<f64>> = (0..4)
        .map(|d| axis_offsets(half_range[d], step[d]))
        .collect();
    let mut cells = Vec::with_capacity(axes.iter().map(Vec::len).product());
    for &dx in &axes[0] {
        for &dy in &axes[1] {
            for &dz in &axes[2] {
                for &dyaw in &axes[3] {
                    cells.push(center.offset([dx, dy, dz, dyaw]));
                }
            }
        }
    }
    cells
}

/// Highest MI; ties go to the cell nearest `reference`, then to the
/// lexicographically smallest (= earliest) cell.
pub fn select_best(evaluations: &[MiEvaluation], reference: &Theta) -> Option<MiEvaluation> {
    let mut best: Option<(MiEvaluation, f64)> = None;
    for e in evaluations.iter().filter(|e| e.valid) {
        let d = e.theta.distance_sq(reference);
        let better = match &best {
            None => true,
            Some((b, bd)) => e.mi > b.mi || (e.mi == b.mi && d < *bd),
        };
        if better {
            best = Some((*e, d));
        }
    }
    best.map(|(e, _)| e)
}

/// Coarse-to-fine search around `init` using points selected by the config.
pub fn grid_search(
    init: &CameraPose,
    config: &GridSearchConfig,
    image: &GrayImage,
    intrinsics: &CameraIntrinsics,
    lidar: &LidarGroundMap,
    executor: &impl GridExecutor,
) -> Result<GridSearchResult> {
    config.validate()?;
    let points = config.select_points(lidar, init);
    grid_search_points(init, config, image, intrinsics, &points, executor)
}

/// [`grid_search`] with an explicit point set.
pub fn grid_search_points(
    init: &CameraPose,
    config: &GridSearchConfig,
    image: &GrayImage,
    intrinsics: &CameraIntrinsics,
    points: &[LidarPoint],
    executor: &impl GridExecutor,
) -> Result<GridSearchResult> {
    config.validate()?;
    let (start, init_rp) = Theta::from_pose(init);
    let roll_pitch = config.roll_pitch.unwrap_or(init_rp);
    let objective = MiObjective::new(image, intrinsics, points, roll_pitch, config.min_points)?;

    let mut stages: Vec<StageResult> = Vec::with_capacity(config.stages);
    let mut center = start;
    let mut half_range = config.half_range;
    let mut step = config.step;
    let mut initial = None;
    for stage in 0..config.stages {
        if stage > 0 {
            for d in 0..4 {
                if half_range[d] > 0.0 {
                    half_range[d] = step[d];
                }
                step[d] /= config.shrink;
            }
        }
        let cells = grid_cells(&center, &half_range, &step);
        let evaluations = executor.evaluate(&objective, &cells);
        if stage == 0 {
            // the unshifted cell sits in the middle of the lexicographic order
            initial = Some(evaluations[evaluations.len() / 2]);
        }
        let best = select_best(&evaluations, &start).ok_or(Error::NoValidGridCell {
            min_points: config.min_points,
        })?;
        center = best.theta;
        stages.push(StageResult {
            center: cells[cells.len() / 2],
            half_range,
            step,
            evaluations,
            best,
        });
    }
    let best = stages.last().map(|s| s.best).expect("at least one stage");
    Ok(GridSearchResult {
        pose: best.theta.to_pose(roll_pitch),
        best,
        initial: initial.expect("first stage ran"),
        roll_pitch,
        points_used: points.len(),
        stages,
    })
}

/// Profile of the objective along one or two axes, other axes at the initial guess.
#[derive(Clone, Debug, PartialEq)]
pub struct MiSlice {
    /// Indices into `[x, y, z, yaw]`; one entry for a 1D slice.
    pub axes: Vec<usize>,
    pub evaluations: Vec<MiEvaluation>,
}

/// All four 1D slices, then the six 2D slices, over the first-stage offsets.
pub fn mi_slices(
    init: &CameraPose,
    config: &GridSearchConfig,
    image: &GrayImage,
    intrinsics: &CameraIntrinsics,
    points: &[LidarPoint],
    executor: &impl GridExecutor,
) -> Result<Vec<MiSlice>> {
    config.validate()?;
    let (start, init_rp) = Theta::from_pose(init);
    let roll_pitch = config.roll_pitch.unwrap_or(init_rp);
    let objective = MiObjective::new(image, intrinsics, points, roll_pitch, config.min_points)?;

    let mut axis_sets: Vec<Vec<usize>> = (0..4).map(|d| alloc::vec![d]).collect();
    for a in 0..4 {
        for b in a + 1..4 {
            axis_sets.push(alloc::vec![a, b]);
        }
    }
    let mut out = Vec::with_capacity(axis_sets.len());
    let mut any_valid = false;
    for axes in axis_sets {
        let mut half_range = [0.0; 4];
        for &d in &axes {
            half_range[d] = config.half_range[d];
        }
        let cells = grid_cells(&start, &half_range, &config.step);
        let evaluations = executor.evaluate(&objective, &cells);
        any_valid |= evaluations.iter().any(|e| e.valid);
        out.push(MiSlice { axes, evaluations });
    }
    if !any_valid {
        return Err(Error::NoValidGridCell {
            min_points: config.min_points,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_symmetric() {
        let o = axis_offsets(2.0, 0.2);
        assert_eq!(o.len(), 21);
        assert_eq!(o[10], 0.0);
        assert!((o[0] + 2.0).abs() < 1e-12 && (o[20] - 2.0).abs() < 1e-12);
        assert_eq!(axis_offsets(0.0, 0.1), alloc::vec![0.0]);
        assert_eq!(axis_offsets(0.5, 0.1).len(), 11);
    }

    #[test]
    fn default_grid_sizes() {
        let cfg = GridSearchConfig::default();
        let cells = grid_cells(&Theta::default(), &cfg.half_range, &cfg.step);
        assert_eq!(cells.len(), 21 * 21 * 11 * 21);
        assert_eq!(cells[cells.len() / 2], Theta::default());
        let fine: [f64; 4] = core::array::from_fn(|d| cfg.step[d] / cfg.shrink);
        assert_eq!(
            grid_cells(&Theta::default(), &cfg.step, &fine).len(),
            11usize.pow(4)
        );
    }

    #[test]
    fn lexicographic_order() {
        let cells = grid_cells(&Theta::default(), &[0.1, 0.1, 0.1, 0.1], &[0.1; 4]);
        for w in cells.windows(2) {
            let (a, b) = (w[0].to_array(), w[1].to_array());
            assert!(a.partial_cmp(&b) == Some(core::cmp::Ordering::Less));
        }
    }

    fn eval(theta: Theta, mi: f64, valid: bool) -> MiEvaluation {
        MiEvaluation {
            theta,
            n_points: 600,
            h_x: 0.0,
            h_y: 0.0,
            h_xy: 0.0,
            mi,
            valid,
        }
    }

    #[test]
    fn tie_breaking() {
        let r = Theta::default();
        let far = eval(Theta::new(1.0, 0.0, 0.0, 0.0), 1.0, true);
        let near = eval(Theta::new(0.0, -0.5, 0.0, 0.0), 1.0, true);
        let near2 = eval(Theta::new(0.0, 0.5, 0.0, 0.0), 1.0, true);
        let invalid = eval(Theta::default(), 5.0, false);
        let best = select_best(&[invalid, far, near, near2], &r).unwrap();
        assert_eq!(best.theta, near.theta);
        assert!(select_best(&[invalid], &r).is_none());
    }

    #[test]
    fn config_validation() {
        let mut cfg = GridSearchConfig::default();
        cfg.step[3] = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = GridSearchConfig {
            stages: 0,
            ..GridSearchConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(GridSearchConfig::default().validate().is_ok());
    }
}
