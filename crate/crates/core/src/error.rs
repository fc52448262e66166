use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("invalid pose: {0}")]
    InvalidPose(&'static str),
    #[error("invalid rectification spec: {0}")]
    InvalidRectification(&'static str),
    #[error("distortion inversion did not converge at pixel ({u}, {v})")]
    UndistortNotConverged { u: f64, v: f64 },
    #[error("pixel ({u}, {v}) lies outside the valid cone of the camera model")]
    OutsideValidCone { u: f64, v: f64 },
    #[error("image is {found_w}x{found_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        found_w: u32,
        found_h: u32,
    },
    #[error("invalid image buffer: {0}")]
    InvalidImage(&'static str),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("reflectivity {0} is outside [0, 255]")]
    ReflectivityOutOfRange(i64),
    #[error("crop window does not intersect the satellite raster (bad GPS initialization?)")]
    EmptyCrop,
    #[error("no ground points within {radius} m of ({x}, {y})")]
    OffMap { x: f64, y: f64, radius: f64 },
    #[error("degenerate point triple: the 3D points are (nearly) collinear")]
    DegenerateTriple,
    #[error("need at least {required} correspondences, got {found}")]
    TooFewCorrespondences { required: usize, found: usize },
    #[error(
        "RANSAC failed: best hypothesis had {best_inliers} inliers after {iterations} iterations"
    )]
    RansacFailed {
        best_inliers: usize,
        iterations: usize,
    },
    #[error("invalid RANSAC configuration: {0}")]
    InvalidRansacConfig(&'static str),
    #[error("no co-observed samples, mutual information undefined")]
    NoOverlap,
    #[error("invalid grid configuration: {0}")]
    InvalidGridConfig(&'static str),
    #[error("every grid cell had fewer than {min_points} in-view points; enlarge the search ranges or use more map points")]
    NoValidGridCell { min_points: usize },
    #[error("camera center is below the ground surface")]
    CameraBelowGround,
    #[error("scene has {available} usable corners, {required} requested")]
    NotEnoughCorners { required: usize, available: usize },
    #[error("invalid synthetic scene parameters: {0}")]
    InvalidScene(&'static str),
}
