use infraloc_core::camera::{rotation_angle_between, CameraIntrinsics, CameraPose};
use infraloc_core::image::GrayImage;
use infraloc_core::map::{GpsInit, LidarGroundMap, LidarPoint, SatelliteMap};
use infraloc_core::Vec3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn intrinsics_strategy() -> impl Strategy<Value = CameraIntrinsics> {
    (
        150.0..400.0f64,
        0.9..1.1f64,
        -2.0..2.0f64,
        0.0..1.2f64,
        prop::array::uniform4(-0.1..0.1f64),
    )
        .prop_map(|(f, aspect, dc, xi, k)| {
            CameraIntrinsics::new(f, f * aspect, 199.5 + dc, 199.5 - dc, xi, 400, 400)
                .with_distortion(k[0], k[1], k[2] * 0.1, k[3] * 0.1)
        })
}

/// Direction of a camera-frame ray at `polar` from the optical axis.
fn direction(polar: f64, azimuth: f64) -> Vec3 {
    Vec3::new(
        polar.sin() * azimuth.cos(),
        polar.sin() * azimuth.sin(),
        polar.cos(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn projection_round_trip(
        intr in intrinsics_strategy(),
        polar in 0.0..1.3f64,
        azimuth in -3.2..3.2f64,
        depth in 0.5..50.0f64,
    ) {
        let p = direction(polar, azimuth) * depth;
        if let Some(px) = intr.project_camera(&p) {
            // non-convergence is a legal outcome only far outside the usual range
            if let Ok(ray) = intr.unproject(px) {
                prop_assert!(ray.cross(&p.normalize()).norm() < 1e-6, "{:?} {:?}", ray, p);
                prop_assert!(ray.dot(&p) > 0.0);
            }
        }
    }

    #[test]
    fn projection_scales_out(
        intr in intrinsics_strategy(),
        polar in 0.0..1.3f64,
        azimuth in -3.2..3.2f64,
        depth in 0.5..50.0f64,
        scale in 0.1..10.0f64,
    ) {
        let p = direction(polar, azimuth) * depth;
        let a = intr.project_camera_unbounded(&p);
        let b = intr.project_camera_unbounded(&(p * scale));
        match (a, b) {
            (Some(a), Some(b)) => {
                prop_assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
            }
            (None, None) => {}
            _ => prop_assert!(false, "projectability depends on depth"),
        }
    }

    #[test]
    fn euler_and_quaternion_round_trip(
        roll in -0.5..0.5f64,
        pitch in -0.5..0.5f64,
        yaw in -3.1..3.1f64,
        c in prop::array::uniform3(-50.0..50.0f64),
    ) {
        let pose = CameraPose::from_euler_center(roll, pitch, yaw, Vec3::from(c));
        let e = pose.euler();
        prop_assert!((e[0] - roll).abs() < 1e-9 && (e[1] - pitch).abs() < 1e-9 && (e[2] - yaw).abs() < 1e-9);
        prop_assert!((pose.center() - Vec3::from(c)).norm() < 1e-9);
        let q = CameraPose::from_quaternion_wxyz(pose.quaternion_wxyz(), *pose.translation()).unwrap();
        prop_assert!(rotation_angle_between(q.rotation(), pose.rotation()) < 1e-12);
    }

    #[test]
    fn pose_inverse(
        roll in -0.5..0.5f64,
        yaw in -3.1..3.1f64,
        p in prop::array::uniform3(-50.0..50.0f64),
    ) {
        let pose = CameraPose::from_euler_center(roll, 0.1, yaw, Vec3::new(1.0, -2.0, 6.0));
        let w = Vec3::from(p);
        prop_assert!((pose.inverse_transform(&pose.transform(&w)) - w).norm() < 1e-9);
    }

    #[test]
    fn georeferencing_is_invertible(
        res in 0.01..2.0f64,
        ox in -1e4..1e4f64,
        oy in -1e4..1e4f64,
        u in -100.0..1100.0f64,
        v in -100.0..1100.0f64,
    ) {
        let sat = SatelliteMap::new(GrayImage::new(4, 4), res, [ox, oy]).unwrap();
        let back = sat.world_to_pixel(sat.pixel_to_world([u, v]));
        prop_assert!((back[0] - u).abs() < 1e-12 * (1.0 + ox.abs() / res));
        prop_assert!((back[1] - v).abs() < 1e-12 * (1.0 + oy.abs() / res));
    }
}

#[test]
fn map_scale_example() {
    let sat = SatelliteMap::new(GrayImage::new(2, 2), 0.1, [0.0, 0.0]).unwrap();
    assert_eq!(sat.pixel_to_world([0.0, 0.0]), [0.0, 0.0]);
    let east = sat.pixel_to_world([10.0, 0.0]);
    assert!((east[0] - 1.0).abs() < 1e-15 && east[1] == 0.0);
}

#[test]
fn crop_size_follows_radius() {
    let sat = SatelliteMap::new(GrayImage::new(400, 400), 0.1, [0.0, 0.0]).unwrap();
    let crop = sat.crop(&GpsInit::new(20.0, -20.0, 5.0).unwrap()).unwrap();
    // side 2 * 5 / 0.1
    assert_eq!(crop.raster().dimensions(), (100, 100));
    assert!(sat.crop(&GpsInit::new(500.0, 500.0, 5.0).unwrap()).is_err());
}

#[test]
fn indexed_disc_query_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points: Vec<LidarPoint> = (0..10_000)
        .map(|_| {
            LidarPoint::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-1.0..1.0),
                rng.random(),
            )
        })
        .collect();
    for cell in [0.37, 1.0, 7.5] {
        let map = LidarGroundMap::with_cell_size(points.clone(), cell).unwrap();
        for _ in 0..100 {
            let c = [rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)];
            let r = rng.random_range(0.01..30.0);
            let brute: Vec<usize> = points
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    let (dx, dy) = (p.x - c[0], p.y - c[1]);
                    dx * dx + dy * dy <= r * r
                })
                .map(|(i, _)| i)
                .collect();
            assert_eq!(map.query_disc(c, r), brute);
        }
    }
}

#[test]
fn capped_query_keeps_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let points: Vec<LidarPoint> = (0..1001)
        .map(|_| {
            LidarPoint::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                0.0,
                1,
            )
        })
        .collect();
    let map = LidarGroundMap::new(points).unwrap();
    let n = map.len();
    let all = map.query_ground_points([0.0, 0.0], 100.0, usize::MAX);
    assert_eq!(all.len(), n);
    let half = map.query_ground_points([0.0, 0.0], 100.0, n.div_ceil(2));
    assert_eq!(half.len(), n.div_ceil(2));
    assert_eq!(
        half,
        map.query_ground_points([0.0, 0.0], 100.0, n.div_ceil(2))
    );
}

#[test]
fn planar_height_is_recovered() {
    let mut points = Vec::new();
    for i in -100..=100 {
        for j in -100..=100 {
            let (x, y) = (i as f64 * 0.1, j as f64 * 0.1);
            points.push(LidarPoint::new(x, y, 0.01 * x, 0));
        }
    }
    let map = LidarGroundMap::new(points).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let (x, y) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
        let z = map.ground_height_at([x, y]).unwrap();
        assert!((z - 0.01 * x).abs() < 1e-3);
    }
    assert!(map.ground_height_at([30.0, 0.0]).is_err());
}
