//! Ray-traced fisheye view of a synthetic scene.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scene::{HeightField, RenderNoise, SyntheticScene};
use crate::camera::{CameraIntrinsics, CameraPose};
use crate::image::{quantize, GrayImage};
use crate::map::SatelliteMap;
use crate::{Error, Result, Vec3};

/// Ray-marching step along the ray, meters.
const MARCH_STEP: f64 = 0.25;
/// Bisection stops once the bracket is shorter than this, meters.
const HIT_TOLERANCE: f64 = 1e-4;

/// Everything the renderer needs besides the pose.
#[derive(Clone, Copy, Debug)]
pub struct Ground<'a> {
    pub reflectivity: &'a SatelliteMap,
    pub height: &'a HeightField,
    /// Half side of the square over which the ground is defined.
    pub half_extent: f64,
}

impl<'a> Ground<'a> {
    pub fn of(scene: &'a SyntheticScene) -> Self {
        Self {
            reflectivity: &scene.reflectivity,
            height: &scene.style.height,
            half_extent: scene.extent / 2.0,
        }
    }

    /// First intersection of the ray `origin + t * dir` (unit `dir`) with the
    /// ground surface, if it lies over the map.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<Vec3> {
        if !(dir.z < -1e-12) {
            return None;
        }
        let (lo, hi) = self.height.bounds(self.half_extent);
        let residual = |t: f64| {
            let p = origin + dir * t;
            p.z - self.height.height(p.x, p.y)
        };
        let mut t0 = ((origin.z - hi) / -dir.z).max(0.0);
        let t_end = (origin.z - lo) / -dir.z;
        if residual(t0) <= 0.0 {
            // only reachable by rounding on a flat layer, or from below ground
            return (t0 > 0.0).then(|| origin + dir * t0);
        }
        loop {
            let p = origin + dir * t0;
            if p.x.abs() > self.half_extent + MARCH_STEP
                || p.y.abs() > self.half_extent + MARCH_STEP
            {
                return None;
            }
            let t1 = (t0 + MARCH_STEP).min(t_end);
            // the surface lies above t_end, so a positive residual there is rounding
            if residual(t1) <= 0.0 || t1 >= t_end {
                let (mut a, mut b) = (t0, t1);
                while b - a > HIT_TOLERANCE {
                    let m = 0.5 * (a + b);
                    if residual(m) > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return Some(origin + dir * (0.5 * (a + b)));
            }
            t0 = t1;
        }
    }

    /// Bilinear reflectivity at a world position; `None` off the raster.
    pub fn reflectivity_at(&self, x: f64, y: f64) -> Option<f64> {
        let px = self.reflectivity.world_to_pixel([x, y]);
        self.reflectivity.raster().bilinear(px[0], px[1])
    }
}

/// Renders the scene from its ground-truth pose with its own noise model.
pub fn render_fisheye(scene: &SyntheticScene) -> Result<GrayImage> {
    render_view(
        &Ground::of(scene),
        scene.intrinsics(),
        &scene.gt_pose,
        &scene.style.render,
        scene.seed,
    )
}

/// Renders `ground` through a fisheye camera at `pose`. Pixels without a
/// ground hit are 0. Noise is drawn per pixel in raster order from `seed`.
pub fn render_view(
    ground: &Ground<'_>,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    noise: &RenderNoise,
    seed: u64,
) -> Result<GrayImage> {
    intrinsics.validate()?;
    let center = pose.center();
    if center.z <= ground.height.height(center.x, center.y) {
        return Err(Error::CameraBelowGround);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_1e_a5e5);
    let gauss = if noise.sigma > 0.0 {
        Some(Normal::new(0.0, noise.sigma).map_err(|_| Error::InvalidScene("noise sigma"))?)
    } else {
        None
    };
    let rt = pose.rotation().transpose();
    let n = noise.samples.max(1);
    let offsets: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64 - 0.5).collect();
    let sample = |px: [f64; 2]| {
        let ray = intrinsics.unproject(px).ok()?;
        let hit = ground.intersect(&center, &(rt * ray))?;
        ground.reflectivity_at(hit.x, hit.y)
    };
    Ok(GrayImage::from_fn(
        intrinsics.width,
        intrinsics.height,
        |u, v| {
            let jitter = gauss.as_ref().map_or(0.0, |g| g.sample(&mut rng));
            let (mut sum, mut hits) = (0.0, 0u32);
            for dv in &offsets {
                for du in &offsets {
                    if let Some(r) = sample([u as f64 + du, v as f64 + dv]) {
                        sum += r;
                        hits += 1;
                    }
                }
            }
            if hits == 0 {
                return 0;
            }
            quantize(noise.gain * (sum / hits as f64) + noise.bias + jitter)
        },
    ))
}
