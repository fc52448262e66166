use infraloc_core::camera::{CameraIntrinsics, CameraPose};
use infraloc_core::image::GrayImage;
use infraloc_core::map::{LidarPoint, SatelliteMap};
use infraloc_core::mi::{
    evaluate_pose, grid_search_points, mi_slices, mutual_information, sample_intensities,
    GridSearchConfig, IntensityHistogram, Sequential, Theta,
};
use infraloc_core::synth::{render_view, Ground, HeightField, RenderNoise};
use infraloc_core::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SQUARE: f64 = 1.0;
const RES: f64 = 0.1;
const HALF: f64 = 20.0;

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(70.0, 70.0, 59.5, 59.5, 1.0, 120, 120)
        .with_distortion(-0.01, 0.002, 0.0, 0.0)
}

/// Value of the 1 m square containing `(x, y)`; neighbouring squares differ.
fn square_value(x: f64, y: f64) -> u8 {
    let i = (x / SQUARE).floor() as i64;
    let j = (y / SQUARE).floor() as i64;
    let h = (i.wrapping_mul(73_856_093) ^ j.wrapping_mul(19_349_663)).rem_euclid(16) as u8;
    h * 15 + 10
}

fn checker_map() -> SatelliteMap {
    let n = (2.0 * HALF / RES) as u32;
    // pixel centers sit half a pixel inside the square edges
    let origin = [-HALF + RES / 2.0, HALF - RES / 2.0];
    let raster = GrayImage::from_fn(n, n, |u, v| {
        square_value(origin[0] + u as f64 * RES, origin[1] - v as f64 * RES)
    });
    SatelliteMap::new(raster, RES, origin).unwrap()
}

/// Distance from `(x, y)` to the nearest square edge.
fn edge_distance(x: f64, y: f64) -> f64 {
    let d = |v: f64| {
        let r = v.rem_euclid(SQUARE);
        r.min(SQUARE - r)
    };
    d(x).min(d(y))
}

struct Fixture {
    image: GrayImage,
    pose: CameraPose,
    points: Vec<LidarPoint>,
}

fn fixture() -> Fixture {
    let map = checker_map();
    let flat = HeightField::flat();
    let ground = Ground {
        reflectivity: &map,
        height: &flat,
        half_extent: HALF,
    };
    let pose = CameraPose::from_euler_center(0.0, 0.0, 0.3, Vec3::new(0.3, -0.2, 6.0));
    let image = render_view(&ground, &intrinsics(), &pose, &RenderNoise::none(), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let points = (0..4000)
        .map(|_| {
            let (x, y) = (rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0));
            LidarPoint::new(x, y, 0.0, square_value(x, y))
        })
        .collect();
    Fixture {
        image,
        pose,
        points,
    }
}

fn config(min_points: usize) -> GridSearchConfig {
    GridSearchConfig {
        half_range: [1.0, 1.0, 0.2, 5f64.to_radians()],
        step: [0.1, 0.1, 0.1, 0.5f64.to_radians()],
        stages: 2,
        shrink: 5.0,
        min_points,
        ..GridSearchConfig::default()
    }
}

#[test]
fn interior_points_see_their_own_reflectivity() {
    let f = fixture();
    let c = f.pose.center();
    let interior: Vec<LidarPoint> = f
        .points
        .iter()
        .copied()
        .filter(|p| edge_distance(p.x, p.y) > 0.25 && (p.x - c.x).hypot(p.y - c.y) < 4.0)
        .collect();
    let pairs = sample_intensities(&f.image, &intrinsics(), &f.pose, &interior).unwrap();
    assert!(interior.len() > 30);
    assert_eq!(pairs.len(), interior.len());
    assert!(pairs.iter().all(|(x, y)| x == y));
    let (_, rp) = Theta::from_pose(&f.pose);
    let e = evaluate_pose(
        &Theta::from_pose(&f.pose).0,
        rp,
        &f.image,
        &intrinsics(),
        &interior,
        1,
    )
    .unwrap();
    assert!((e.mi - e.h_x).abs() < 1e-9);
    assert!((e.h_x - e.h_y).abs() < 1e-12);
}

#[test]
fn constant_image_carries_no_information() {
    let f = fixture();
    let image = GrayImage::filled(120, 120, 128);
    let pairs = sample_intensities(&image, &intrinsics(), &f.pose, &f.points).unwrap();
    assert!(!pairs.is_empty());
    assert!(pairs.iter().all(|&(_, y)| y == 128));
    let e = mutual_information(&IntensityHistogram::from_samples(&pairs)).unwrap();
    assert_eq!(e.h_y, 0.0);
    assert!(e.mi.abs() < 1e-12);
}

#[test]
fn points_behind_the_camera_are_dropped() {
    let f = fixture();
    let above: Vec<LidarPoint> = (0..50)
        .map(|i| LidarPoint::new(i as f64 * 0.1, 0.0, 10.0, 7))
        .collect();
    assert!(sample_intensities(&f.image, &intrinsics(), &f.pose, &above)
        .unwrap()
        .is_empty());
}

#[test]
fn slice_centres_match_direct_evaluation() {
    let f = fixture();
    let cfg = config(100);
    let (theta, rp) = Theta::from_pose(&f.pose);
    let direct = evaluate_pose(&theta, rp, &f.image, &intrinsics(), &f.points, 100).unwrap();
    let slices = mi_slices(
        &f.pose,
        &cfg,
        &f.image,
        &intrinsics(),
        &f.points,
        &Sequential,
    )
    .unwrap();
    assert_eq!(slices.len(), 10);
    for s in &slices {
        let mid = s.evaluations[s.evaluations.len() / 2];
        assert_eq!(mid, direct);
    }
    // one-dimensional profiles peak at the true pose
    for (d, s) in slices.iter().take(4).enumerate() {
        let best = s
            .evaluations
            .iter()
            .filter(|e| e.valid)
            .max_by(|a, b| a.mi.partial_cmp(&b.mi).unwrap())
            .unwrap();
        let off = (best.theta.to_array()[d] - theta.to_array()[d]).abs();
        assert!(off <= cfg.step[d] * 1.0001, "axis {d}: {off}");
    }
}

/// MI at `theta` through the generic projection path.
fn reference_mi(f: &Fixture, theta: &Theta, rp: [f64; 2], min_points: usize) -> Option<f64> {
    let pairs = sample_intensities(&f.image, &intrinsics(), &theta.to_pose(rp), &f.points).ok()?;
    if pairs.len() < min_points {
        return None;
    }
    mutual_information(&IntensityHistogram::from_samples(&pairs))
        .ok()
        .map(|e| e.mi)
}

#[test]
fn single_stage_matches_brute_force() {
    let f = fixture();
    let (truth, rp) = Theta::from_pose(&f.pose);
    let start = Theta::new(truth.x + 0.15, truth.y - 0.1, truth.z, truth.yaw + 0.01);
    let cfg = GridSearchConfig {
        half_range: [0.2, 0.2, 0.1, 1f64.to_radians()],
        step: [0.1, 0.1, 0.1, 0.5f64.to_radians()],
        stages: 1,
        ..config(100)
    };
    let res = grid_search_points(
        &start.to_pose(rp),
        &cfg,
        &f.image,
        &intrinsics(),
        &f.points,
        &Sequential,
    )
    .unwrap();
    let mut best = f64::NEG_INFINITY;
    for i in -2..=2 {
        for j in -2..=2 {
            for k in -1..=1 {
                for l in -2..=2 {
                    let t = Theta::new(
                        start.x + i as f64 * 0.1,
                        start.y + j as f64 * 0.1,
                        start.z + k as f64 * 0.1,
                        start.yaw + l as f64 * 0.5f64.to_radians(),
                    );
                    if let Some(mi) = reference_mi(&f, &t, rp, 100) {
                        best = best.max(mi);
                    }
                }
            }
        }
    }
    assert_eq!(res.stages[0].evaluations.len(), 5 * 5 * 3 * 5);
    assert!(
        (res.best.mi - best).abs() < 1e-9,
        "{} vs {}",
        res.best.mi,
        best
    );
    let at = reference_mi(&f, &res.best.theta, rp, 100).unwrap();
    assert!((at - best).abs() < 1e-9);
}

#[test]
fn search_recovers_offset_start() {
    let f = fixture();
    let (truth, rp) = Theta::from_pose(&f.pose);
    let start = Theta::new(
        truth.x + 0.5,
        truth.y - 0.5,
        truth.z,
        truth.yaw + 2f64.to_radians(),
    );
    let res = grid_search_points(
        &start.to_pose(rp),
        &config(100),
        &f.image,
        &intrinsics(),
        &f.points,
        &Sequential,
    )
    .unwrap();
    let t = res.best.theta;
    assert!((t.center() - truth.center()).norm() < 0.05, "{t:?}");
    assert!((t.yaw - truth.yaw).abs() < 0.2f64.to_radians());
    assert!(res.best.mi >= res.initial.mi);
}

#[test]
fn zero_ranges_return_the_start() {
    let f = fixture();
    let cfg = GridSearchConfig {
        half_range: [0.0; 4],
        ..config(100)
    };
    let res = grid_search_points(
        &f.pose,
        &cfg,
        &f.image,
        &intrinsics(),
        &f.points,
        &Sequential,
    )
    .unwrap();
    assert_eq!(res.best.theta, Theta::from_pose(&f.pose).0);
    assert_eq!(res.evaluations(), 2);
}

#[test]
fn intensity_shift_keeps_the_argmax() {
    let f = fixture();
    let shifted = GrayImage::from_fn(120, 120, |u, v| f.image.get(u, v) / 2 + 40);
    let cfg = GridSearchConfig {
        half_range: [0.3, 0.3, 0.0, 1f64.to_radians()],
        stages: 1,
        ..config(100)
    };
    let (truth, rp) = Theta::from_pose(&f.pose);
    let start = Theta::new(truth.x + 0.1, truth.y, truth.z, truth.yaw).to_pose(rp);
    let a = grid_search_points(
        &start,
        &cfg,
        &f.image,
        &intrinsics(),
        &f.points,
        &Sequential,
    )
    .unwrap();
    let b = grid_search_points(
        &start,
        &cfg,
        &shifted,
        &intrinsics(),
        &f.points,
        &Sequential,
    )
    .unwrap();
    assert_eq!(a.best.theta, b.best.theta);
}

#[test]
fn half_turn_of_the_world_is_equivariant() {
    let f = fixture();
    let (theta, rp) = Theta::from_pose(&f.pose);
    let turned: Vec<LidarPoint> = f
        .points
        .iter()
        .map(|p| LidarPoint::new(-p.x, -p.y, p.z, p.reflectivity))
        .collect();
    let turned_theta = Theta::new(
        -theta.x,
        -theta.y,
        theta.z,
        theta.yaw + std::f64::consts::PI,
    );
    let a = evaluate_pose(&theta, rp, &f.image, &intrinsics(), &f.points, 100).unwrap();
    let b = evaluate_pose(&turned_theta, rp, &f.image, &intrinsics(), &turned, 100).unwrap();
    assert_eq!(a.n_points, b.n_points);
    assert!((a.mi - b.mi).abs() < 1e-9, "{} {}", a.mi, b.mi);
}
