//! Levenberg-Marquardt refinement of a pinhole pose on 2D-3D pairs.

use nalgebra::{Matrix6, Rotation3, Vector6};

use crate::camera::CameraPose;
use crate::rectify::PinholeCamera;
use crate::{Pixel, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Stop once the largest gradient component falls below this.
    pub gradient_tolerance: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-10,
        }
    }
}

/// Minimizes the summed squared reprojection error of `pairs` (pixel, world)
/// over rotation and translation. Points behind the camera are ignored.
pub fn refine_pose(
    pose: &CameraPose,
    pairs: &[(Pixel, Vec3)],
    camera: &PinholeCamera,
    config: &RefineConfig,
) -> CameraPose {
    let mut current = *pose;
    let Some((mut cost, mut h, mut g)) = normal_equations(&current, pairs, camera) else {
        return current;
    };
    let mut mu = 1e-3;
    for _ in 0..config.max_iterations {
        if g.amax() < config.gradient_tolerance {
            break;
        }
        let mut damped = h;
        for i in 0..6 {
            damped[(i, i)] += mu * h[(i, i)].max(1e-12);
        }
        let Some(delta) = damped.cholesky().map(|c| c.solve(&(-g))) else {
            mu *= 4.0;
            continue;
        };
        let candidate = apply_update(&current, &delta);
        match normal_equations(&candidate, pairs, camera) {
            Some((c, hc, gc)) if c < cost => {
                let converged = cost - c <= 1e-15 * cost;
                current = candidate;
                cost = c;
                h = hc;
                g = gc;
                mu = (mu / 3.0).max(1e-12);
                if converged {
                    break;
                }
            }
            _ => {
                mu *= 4.0;
                if mu > 1e12 {
                    break;
                }
            }
        }
    }
    current
}

/// `R <- exp(w) R`, `t <- t + dt` with `delta = [w, dt]`.
fn apply_update(pose: &CameraPose, delta: &Vector6<f64>) -> CameraPose {
    let w = Vec3::new(delta[0], delta[1], delta[2]);
    let dt = Vec3::new(delta[3], delta[4], delta[5]);
    let step = Rotation3::new(w).into_inner();
    CameraPose::from_parts_unchecked(step * pose.rotation(), pose.translation() + dt)
        .orthonormalized()
}

/// Cost, Gauss-Newton Hessian and gradient; `None` if no point is in front.
fn normal_equations(
    pose: &CameraPose,
    pairs: &[(Pixel, Vec3)],
    camera: &PinholeCamera,
) -> Option<(f64, Matrix6<f64>, Vector6<f64>)> {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    let mut cost = 0.0;
    let mut used = 0usize;
    for (px, world) in pairs {
        let rotated = pose.rotation() * world;
        let p = rotated + pose.translation();
        if !(p.z > 0.0) {
            continue;
        }
        used += 1;
        let inv_z = 1.0 / p.z;
        let r = [
            camera.focal * p.x * inv_z + camera.cx - px[0],
            camera.focal * p.y * inv_z + camera.cy - px[1],
        ];
        cost += r[0] * r[0] + r[1] * r[1];
        // d(pixel)/dP
        let f = camera.focal;
        let dp = [
            [f * inv_z, 0.0, -f * p.x * inv_z * inv_z],
            [0.0, f * inv_z, -f * p.y * inv_z * inv_z],
        ];
        // dP/dw = -[R X]_x, dP/dt = I
        let q = rotated;
        let skew = [[0.0, q.z, -q.y], [-q.z, 0.0, q.x], [q.y, -q.x, 0.0]];
        for row in 0..2 {
            let mut j = [0.0; 6];
            for k in 0..3 {
                j[k] = (0..3).map(|m| dp[row][m] * skew[m][k]).sum();
                j[3 + k] = dp[row][k];
            }
            for a in 0..6 {
                g[a] += j[a] * r[row];
                for b in 0..6 {
                    h[(a, b)] += j[a] * j[b];
                }
            }
        }
    }
    (used > 0).then_some((cost, h, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn camera() -> PinholeCamera {
        PinholeCamera {
            focal: 160.0,
            cx: 199.5,
            cy: 199.5,
            width: 400,
            height: 400,
        }
    }

    fn scene(pose: &CameraPose) -> Vec<(Pixel, Vec3)> {
        let mut out = Vec::new();
        for i in 0..6 {
            for j in 0..5 {
                let w = Vec3::new(
                    i as f64 * 1.7 - 4.0,
                    j as f64 * 1.3 - 3.0,
                    0.1 * (i % 3) as f64,
                );
                out.push((camera().project(&pose.transform(&w)).unwrap(), w));
            }
        }
        out
    }

    #[test]
    fn converges_from_perturbed_pose() {
        let truth = CameraPose::from_euler_center(0.02, -0.01, 0.4, Vec3::new(0.5, -0.5, 6.0));
        let pairs = scene(&truth);
        let start = CameraPose::from_euler_center(0.05, 0.02, 0.45, Vec3::new(0.8, -0.2, 5.7));
        let refined = refine_pose(&start, &pairs, &camera(), &RefineConfig::default());
        assert!((refined.center() - truth.center()).norm() < 1e-7);
        assert!((refined.rotation() - truth.rotation()).norm() < 1e-9);
    }

    #[test]
    fn exact_pose_is_a_fixed_point() {
        let truth = CameraPose::from_euler_center(0.0, 0.0, -1.2, Vec3::new(0.0, 0.0, 5.0));
        let pairs = scene(&truth);
        let refined = refine_pose(&truth, &pairs, &camera(), &RefineConfig::default());
        assert!((refined.translation() - truth.translation()).norm() < 1e-12);
    }
}
