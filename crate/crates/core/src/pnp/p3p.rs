//! Minimal absolute pose from three points (Lambda Twist formulation).
//!
//! The three distance constraints between the unknown depths are combined into
//! a degenerate conic whose two planes each reduce the problem to a
//! homogeneous quadratic. Depths are polished with Gauss-Newton before the
//! pose is recovered from the two point triads.

use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen, SVD};

use crate::camera::CameraPose;
use crate::rectify::PinholeCamera;
use crate::{Error, Mat3, Pixel, Result, Vec3};
#[allow(unused_imports)]
use num_traits::Float;

/// World triangles with a smaller area (m^2) are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-6;

/// Candidates reprojecting any of the three points worse than this are dropped.
const MAX_CANDIDATE_ERROR_PX: f64 = 1e-6;

/// Up to four poses of a pinhole camera observing `world[i]` at `pixels[i]`.
pub fn p3p_solve(
    pixels: &[Pixel; 3],
    world: &[Vec3; 3],
    camera: &PinholeCamera,
) -> Result<Vec<CameraPose>> {
    let bearings = pixels.map(|px| camera.ray(px).normalize());
    let poses = p3p_solve_bearings(&bearings, world)?;
    Ok(poses
        .into_iter()
        .filter(|pose| {
            (0..3).all(|i| match camera.project(&pose.transform(&world[i])) {
                Some(px) => {
                    let (du, dv) = (px[0] - pixels[i][0], px[1] - pixels[i][1]);
                    (du * du + dv * dv).sqrt() <= MAX_CANDIDATE_ERROR_PX
                }
                None => false,
            })
        })
        .collect())
}

/// Same as [`p3p_solve`] with unit bearing vectors instead of pixels. Does not
/// filter by reprojection error.
pub fn p3p_solve_bearings(bearings: &[Vec3; 3], world: &[Vec3; 3]) -> Result<Vec<CameraPose>> {
    let d12 = world[0] - world[1];
    let d13 = world[0] - world[2];
    let d23 = world[1] - world[2];
    if 0.5 * d12.cross(&d13).norm() < MIN_TRIANGLE_AREA {
        return Err(Error::DegenerateTriple);
    }
    let a = [d12.norm_squared(), d13.norm_squared(), d23.norm_squared()];
    let c12 = bearings[0].dot(&bearings[1]);
    let c13 = bearings[0].dot(&bearings[2]);
    let c23 = bearings[1].dot(&bearings[2]);

    // lambda^T M_ij lambda = a_ij
    let m12 = Matrix3::new(1.0, -c12, 0.0, -c12, 1.0, 0.0, 0.0, 0.0, 0.0);
    let m13 = Matrix3::new(1.0, 0.0, -c13, 0.0, 0.0, 0.0, -c13, 0.0, 1.0);
    let m23 = Matrix3::new(0.0, 0.0, 0.0, 0.0, 1.0, -c23, 0.0, -c23, 1.0);
    let forms = [m12, m13, m23];

    let d1 = m12 * a[2] - m23 * a[0];
    let d2 = m13 * a[2] - m23 * a[1];
    let gamma = degenerate_combination(&d1, &d2);
    let d0 = d1 + d2 * gamma;

    let eig = SymmetricEigen::new(d0);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .abs()
            .partial_cmp(&eig.eigenvalues[i].abs())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let (s1, s2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    let e1: Vec3 = eig.eigenvectors.column(order[0]).into();
    let e2: Vec3 = eig.eigenvectors.column(order[1]).into();
    if s1 == 0.0 {
        return Ok(Vec::new());
    }
    let ratio = (-s2 / s1).max(0.0).sqrt();

    let mut depths: Vec<Vec3> = Vec::new();
    let normals = if ratio == 0.0 {
        [Some(e1), None]
    } else {
        [Some(e1 - e2 * ratio), Some(e1 + e2 * ratio)]
    };
    for normal in normals.into_iter().flatten() {
        for lambda in depths_on_plane(&normal, &forms, &a) {
            let lambda = polish_depths(lambda, &[c12, c13, c23], &a);
            if lambda.iter().all(|&l| l > 0.0)
                && !depths
                    .iter()
                    .any(|d| (d - lambda).norm() <= 1e-9 * lambda.norm())
            {
                depths.push(lambda);
            }
        }
    }

    Ok(depths
        .iter()
        .filter_map(|lambda| {
            let cam = [
                bearings[0] * lambda[0],
                bearings[1] * lambda[1],
                bearings[2] * lambda[2],
            ];
            align_triads(world, &cam)
        })
        .collect())
}

/// A root `gamma` of `det(d1 + gamma * d2) = 0`.
fn degenerate_combination(d1: &Mat3, d2: &Mat3) -> f64 {
    // det is a cubic in gamma; recover its coefficients from four samples
    let f = |g: f64| (d1 + d2 * g).determinant();
    let c0 = f(0.0);
    let c3 = d2.determinant();
    let (fp, fm) = (f(1.0), f(-1.0));
    let c2 = 0.5 * (fp + fm) - c0;
    let c1 = 0.5 * (fp - fm) - c3;
    let roots = real_cubic_roots(c3, c2, c1, c0);
    // the best-conditioned root has the steepest slope
    let mut best = 0.0;
    let mut best_slope = -1.0;
    for g in roots {
        let slope = (3.0 * c3 * g * g + 2.0 * c2 * g + c1).abs();
        if slope > best_slope {
            best_slope = slope;
            best = g;
        }
    }
    best
}

/// Real roots of `c3 x^3 + c2 x^2 + c1 x + c0`, Newton-polished.
pub(crate) fn real_cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let scale = c3.abs().max(c2.abs()).max(c1.abs()).max(c0.abs());
    if scale == 0.0 {
        return alloc::vec![0.0];
    }
    let mut roots = Vec::new();
    if c3.abs() <= 1e-14 * scale {
        quadratic_roots(c2, c1, c0, &mut roots);
    } else {
        let (b, c, d) = (c2 / c3, c1 / c3, c0 / c3);
        // depressed cubic t^3 + p t + q with x = t - b/3
        let shift = b / 3.0;
        let p = c - b * b / 3.0;
        let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
        let disc = q * q / 4.0 + p * p * p / 27.0;
        if disc > 0.0 {
            let sq = disc.sqrt();
            let t = (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt();
            roots.push(t - shift);
        } else if p == 0.0 {
            roots.push(-shift);
        } else {
            let r = (-p / 3.0).sqrt();
            let phi = ((3.0 * q) / (2.0 * p * r)).clamp(-1.0, 1.0).acos();
            for k in 0..3 {
                let t = 2.0 * r * ((phi - 2.0 * core::f64::consts::PI * k as f64) / 3.0).cos();
                roots.push(t - shift);
            }
        }
    }
    for x in roots.iter_mut() {
        for _ in 0..4 {
            let f = ((c3 * *x + c2) * *x + c1) * *x + c0;
            let df = (3.0 * c3 * *x + 2.0 * c2) * *x + c1;
            if df == 0.0 {
                break;
            }
            let next = *x - f / df;
            if !next.is_finite() {
                break;
            }
            *x = next;
        }
    }
    roots
}

fn quadratic_roots(a: f64, b: f64, c: f64, out: &mut Vec<f64>) {
    if a == 0.0 {
        if b != 0.0 {
            out.push(-c / b);
        }
        return;
    }
    let mut disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        if disc < -1e-10 * b * b {
            return;
        }
        disc = 0.0;
    }
    // numerically stable pair
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        out.push(0.0);
        return;
    }
    out.push(q / a);
    if disc > 0.0 {
        out.push(c / q);
    }
}

/// Depth vectors on the plane `normal . lambda = 0` satisfying the three
/// distance constraints (up to their consistency).
fn depths_on_plane(normal: &Vec3, forms: &[Mat3; 3], a: &[f64; 3]) -> Vec<Vec3> {
    let n = normal.normalize();
    let helper = if n.x.abs() < 0.6 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let b1 = n.cross(&helper).normalize();
    let b2 = n.cross(&b1);

    // a13 * Q12 - a12 * Q13 = 0 is homogeneous in (alpha, beta)
    let q = |m: &Mat3, u: &Vec3, v: &Vec3| u.dot(&(m * v));
    let (m12, m13) = (&forms[0], &forms[1]);
    let qa = a[1] * q(m12, &b1, &b1) - a[0] * q(m13, &b1, &b1);
    let qb = 2.0 * (a[1] * q(m12, &b1, &b2) - a[0] * q(m13, &b1, &b2));
    let qc = a[1] * q(m12, &b2, &b2) - a[0] * q(m13, &b2, &b2);

    let mut ratios = Vec::new();
    let mut directions = Vec::new();
    if qa.abs() >= qc.abs() {
        quadratic_roots(qa, qb, qc, &mut ratios);
        directions.extend(ratios.iter().map(|&t| b1 * t + b2));
    } else {
        quadratic_roots(qc, qb, qa, &mut ratios);
        directions.extend(ratios.iter().map(|&t| b1 + b2 * t));
    }

    let mut out = Vec::new();
    for d in directions {
        let d = d.normalize();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..3 {
            let qk = q(&forms[k], &d, &d);
            num += a[k] * qk;
            den += qk * qk;
        }
        if !(den > 0.0) {
            continue;
        }
        let kappa2 = num / den;
        if !(kappa2 > 0.0) {
            continue;
        }
        let mut lambda = d * kappa2.sqrt();
        if lambda.sum() < 0.0 {
            lambda = -lambda;
        }
        out.push(lambda);
    }
    out
}

/// Gauss-Newton on `l_i^2 + l_j^2 - 2 c_ij l_i l_j = a_ij`.
fn polish_depths(mut l: Vec3, c: &[f64; 3], a: &[f64; 3]) -> Vec3 {
    let residual = |l: &Vec3| {
        Vec3::new(
            l[0] * l[0] + l[1] * l[1] - 2.0 * c[0] * l[0] * l[1] - a[0],
            l[0] * l[0] + l[2] * l[2] - 2.0 * c[1] * l[0] * l[2] - a[1],
            l[1] * l[1] + l[2] * l[2] - 2.0 * c[2] * l[1] * l[2] - a[2],
        )
    };
    let mut r = residual(&l);
    for _ in 0..5 {
        let j = Matrix3::new(
            2.0 * (l[0] - c[0] * l[1]),
            2.0 * (l[1] - c[0] * l[0]),
            0.0,
            2.0 * (l[0] - c[1] * l[2]),
            0.0,
            2.0 * (l[2] - c[1] * l[0]),
            0.0,
            2.0 * (l[1] - c[2] * l[2]),
            2.0 * (l[2] - c[2] * l[1]),
        );
        let Some(step) = j.lu().solve(&r) else {
            break;
        };
        let next = l - step;
        let r_next = residual(&next);
        if !(r_next.norm() < r.norm()) {
            break;
        }
        l = next;
        r = r_next;
    }
    l
}

/// Rigid transform taking the world triad onto the camera-frame triad.
fn align_triads(world: &[Vec3; 3], cam: &[Vec3; 3]) -> Option<CameraPose> {
    let wc = (world[0] + world[1] + world[2]) / 3.0;
    let cc = (cam[0] + cam[1] + cam[2]) / 3.0;
    let mut h = Mat3::zeros();
    for i in 0..3 {
        h += (world[i] - wc) * (cam[i] - cc).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let mut fix = Mat3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = v * fix * u.transpose();
    let translation = cc - rotation * wc;
    if !rotation
        .iter()
        .chain(translation.iter())
        .all(|x| x.is_finite())
    {
        return None;
    }
    Some(CameraPose::from_parts_unchecked(rotation, translation).orthonormalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{nadir_rotation, rotation_from_euler};

    fn camera() -> PinholeCamera {
        PinholeCamera {
            focal: 160.0,
            cx: 199.5,
            cy: 199.5,
            width: 400,
            height: 400,
        }
    }

    fn observe(pose: &CameraPose, world: &[Vec3; 3]) -> [Pixel; 3] {
        world.map(|p| camera().project(&pose.transform(&p)).unwrap())
    }

    #[test]
    fn cubic_roots() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let mut r = real_cubic_roots(1.0, 0.0, -7.0, 6.0);
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(r.len(), 3);
        for (x, e) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((x - e).abs() < 1e-12);
        }
        let r = real_cubic_roots(2.0, 0.0, 2.0, -4.0); // 2(x-1)(x^2+x+2)
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-12);
        let r = real_cubic_roots(0.0, 1.0, -3.0, 2.0);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn recovers_generic_pose() {
        let pose = CameraPose::from_euler_center(0.05, -0.08, 0.7, Vec3::new(1.0, -2.0, 6.0));
        let world = [
            Vec3::new(2.0, -1.0, 0.1),
            Vec3::new(-3.0, 0.5, -0.05),
            Vec3::new(0.5, -5.0, 0.2),
        ];
        let sols = p3p_solve(&observe(&pose, &world), &world, &camera()).unwrap();
        assert!(!sols.is_empty() && sols.len() <= 4);
        let best = sols
            .iter()
            .map(|s| (s.rotation() - pose.rotation()).norm() + (s.center() - pose.center()).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-8, "{best}");
    }

    #[test]
    fn equilateral_nadir_has_four_solutions() {
        // camera straight above the centroid of an equilateral triangle
        let pose =
            CameraPose::from_rotation_center(nadir_rotation(), Vec3::new(0.0, 0.0, 5.0)).unwrap();
        let r = 3.0;
        let world = [0.0f64, 120.0, 240.0].map(|deg| {
            let t = deg.to_radians();
            Vec3::new(r * t.cos(), r * t.sin(), 0.0)
        });
        let sols = p3p_solve(&observe(&pose, &world), &world, &camera()).unwrap();
        assert_eq!(sols.len(), 4);
        assert!(sols
            .iter()
            .any(|s| (s.center() - pose.center()).norm() < 1e-9));
    }

    #[test]
    fn collinear_is_degenerate() {
        let world = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(2.0, 2.0, 0.0),
        ];
        let px = [[10.0, 10.0], [20.0, 20.0], [30.0, 30.0]];
        assert!(matches!(
            p3p_solve(&px, &world, &camera()),
            Err(Error::DegenerateTriple)
        ));
    }

    #[test]
    fn tilted_camera() {
        let r = rotation_from_euler(0.3, -0.2, 2.5);
        let pose = CameraPose::from_rotation_center(r, Vec3::new(-4.0, 3.0, 5.5)).unwrap();
        let world = [
            Vec3::new(-3.0, 4.0, 0.0),
            Vec3::new(-6.0, 1.0, 0.3),
            Vec3::new(-2.0, 1.5, -0.2),
        ];
        let pixels = observe(&pose, &world);
        let sols = p3p_solve(&pixels, &world, &camera()).unwrap();
        assert!(sols
            .iter()
            .any(|s| (s.center() - pose.center()).norm() < 1e-8));
    }
}
