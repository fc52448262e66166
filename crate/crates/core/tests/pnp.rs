use infraloc_core::camera::{rotation_angle_between, CameraPose};
use infraloc_core::map::GpsInit;
use infraloc_core::pnp::{lift_correspondences, p3p_solve, ransac_pnp, LiftedPair, RansacConfig};
use infraloc_core::rectify::{PinholeCamera, RectificationSpec};
use infraloc_core::synth::{
    default_spec, fabricate_correspondences, generate_scene, FabricationParams, SceneStyle,
    STANDARD_EXTENT,
};
use infraloc_core::{Error, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn spec() -> RectificationSpec {
    RectificationSpec {
        focal: 160.0,
        width: 400,
        height: 400,
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    }
}

fn camera() -> PinholeCamera {
    spec().pinhole()
}

/// Ground point seen by `pose` inside the image, drawn uniformly on the ground patch.
fn visible_point(rng: &mut ChaCha8Rng, pose: &CameraPose, cam: &PinholeCamera) -> Vec3 {
    loop {
        let c = pose.center();
        let w = Vec3::new(
            c.x + rng.random_range(-12.0..12.0),
            c.y + rng.random_range(-12.0..12.0),
            rng.random_range(-0.2..0.2),
        );
        if let Some(px) = cam.project(&pose.transform(&w)) {
            if cam.contains(px) {
                return w;
            }
        }
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> CameraPose {
    CameraPose::from_euler_center(
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.05..0.05),
        rng.random_range(-3.1..3.1),
        Vec3::new(
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
            rng.random_range(4.0..8.0),
        ),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn p3p_contains_true_pose(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam = camera();
        let truth = random_pose(&mut rng);
        let world = [(); 3].map(|_| visible_point(&mut rng, &truth, &cam));
        let area = 0.5 * (world[1] - world[0]).cross(&(world[2] - world[0])).norm();
        prop_assume!(area > 0.5);
        let pixels = world.map(|w| cam.project(&truth.transform(&w)).unwrap());
        let poses = p3p_solve(&pixels, &world, &cam).unwrap();
        prop_assert!(!poses.is_empty() && poses.len() <= 4);
        let best = poses
            .iter()
            .map(|p| rotation_angle_between(p.rotation(), truth.rotation()))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(best < 1e-6, "rotation error {best}");
        prop_assert!(poses
            .iter()
            .any(|p| (p.center() - truth.center()).norm() < 1e-6));
    }
}

#[test]
fn symmetric_triangle_has_mirror_solution() {
    // camera above the centroid of an equilateral triangle looking straight down
    let truth = CameraPose::from_euler_center(0.0, 0.0, 0.0, Vec3::new(0.0, 0.0, 5.0));
    let world = [0.0f64, 120.0, 240.0].map(|deg| {
        let a = deg.to_radians();
        Vec3::new(3.0 * a.cos(), 3.0 * a.sin(), 0.0)
    });
    let cam = camera();
    let pixels = world.map(|w| cam.project(&truth.transform(&w)).unwrap());
    let poses = p3p_solve(&pixels, &world, &cam).unwrap();
    assert!(poses
        .iter()
        .any(|p| (p.center() - truth.center()).norm() < 1e-6));
    // every returned pose reproduces the three pixels
    for p in &poses {
        for i in 0..3 {
            let q = cam.project(&p.transform(&world[i])).unwrap();
            assert!((q[0] - pixels[i][0]).abs() < 1e-6 && (q[1] - pixels[i][1]).abs() < 1e-6);
        }
    }
}

#[test]
fn collinear_triple_is_rejected() {
    let world = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 1.0, 0.0),
        Vec3::new(2.0, 2.0, 0.0),
    ];
    let pixels = [[100.0, 100.0], [200.0, 200.0], [300.0, 300.0]];
    assert!(matches!(
        p3p_solve(&pixels, &world, &camera()),
        Err(Error::DegenerateTriple)
    ));
}

fn synthetic_pairs(
    rng: &mut ChaCha8Rng,
    truth: &CameraPose,
    n: usize,
    outliers: usize,
    noise: f64,
) -> Vec<LiftedPair> {
    let cam = camera();
    let mut pairs: Vec<LiftedPair> = (0..n)
        .map(|_| {
            let world = visible_point(rng, truth, &cam);
            let mut rect = cam.project(&truth.transform(&world)).unwrap();
            if noise > 0.0 {
                let g = Normal::new(0.0, noise).unwrap();
                rect[0] += g.sample(rng);
                rect[1] += g.sample(rng);
            }
            LiftedPair {
                rect,
                world,
                height_fallback: false,
            }
        })
        .collect();
    for p in pairs.iter_mut().take(outliers) {
        p.rect = [rng.random_range(0.0..399.0), rng.random_range(0.0..399.0)];
    }
    pairs
}

#[test]
fn ransac_noise_free_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let truth = random_pose(&mut rng);
        let pairs = synthetic_pairs(&mut rng, &truth, 50, 0, 0.0);
        let res = ransac_pnp(&pairs, &spec(), &RansacConfig::default()).unwrap();
        assert_eq!(res.inliers.len(), 50);
        assert!((res.pose.center() - truth.center()).norm() < 1e-4);
        assert!(rotation_angle_between(res.pose.rotation(), truth.rotation()) < 1e-5);
    }
}

#[test]
fn ransac_with_outliers_and_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let runs = 40;
    let mut good = 0;
    for run in 0..runs {
        let truth = random_pose(&mut rng);
        let pairs = synthetic_pairs(&mut rng, &truth, 50, 15, 0.5);
        let cfg = RansacConfig {
            seed: run,
            ..RansacConfig::default()
        };
        let res = ransac_pnp(&pairs, &spec(), &cfg).unwrap();
        // all true inliers are kept at 0.5 px noise with a 2 px threshold, bar rare tails
        let kept = (15..50).filter(|i| res.inliers.contains(i)).count();
        assert!(kept >= 33, "kept {kept}");
        if (res.pose.center() - truth.center()).norm() < 0.05 {
            good += 1;
        }
    }
    assert!(good >= runs * 95 / 100, "{good}/{runs}");
}

fn fabrication(
    scene_seed: u64,
    count: usize,
    outliers: f64,
    noise: f64,
) -> (CameraPose, Vec<LiftedPair>, RectificationSpec) {
    let scene = generate_scene(scene_seed, STANDARD_EXTENT, &SceneStyle::noiseless()).unwrap();
    let c = scene.gt_pose.center();
    let spec = default_spec(&scene);
    let fab = fabricate_correspondences(
        &scene,
        &FabricationParams {
            count,
            outlier_fraction: outliers,
            pixel_noise: noise,
            gps: GpsInit::new(c.x, c.y, 15.0).unwrap(),
            spec,
            seed: scene_seed + 100,
        },
    )
    .unwrap();
    let lifted = lift_correspondences(&fab.matches, &fab.crop, &scene.map.lidar).unwrap();
    (scene.gt_pose, lifted, spec)
}

#[test]
fn fabricated_matches_recover_ground_truth() {
    for seed in [1, 2, 3] {
        let (truth, lifted, spec) = fabrication(seed, 20, 0.0, 0.0);
        assert!(lifted.iter().all(|p| !p.height_fallback));
        let res = ransac_pnp(&lifted, &spec, &RansacConfig::default()).unwrap();
        let dc = (res.pose.center() - truth.center()).norm();
        let dr = rotation_angle_between(res.pose.rotation(), truth.rotation()).to_degrees();
        assert!(dc < 1e-3, "seed {seed}: {dc} m");
        assert!(dr < 0.01, "seed {seed}: {dr} deg");
    }
}

#[test]
fn fabricated_outliers_are_rejected() {
    let (truth, lifted, spec) = fabrication(4, 24, 0.25, 0.2);
    let res = ransac_pnp(&lifted, &spec, &RansacConfig::default()).unwrap();
    assert!(res.inliers.len() >= 16);
    assert!((res.pose.center() - truth.center()).norm() < 0.1);
}

#[test]
fn fabrication_needs_four_matches() {
    let scene = generate_scene(1, STANDARD_EXTENT, &SceneStyle::noiseless()).unwrap();
    let c = scene.gt_pose.center();
    let res = fabricate_correspondences(
        &scene,
        &FabricationParams {
            count: 3,
            outlier_fraction: 0.0,
            pixel_noise: 0.0,
            gps: GpsInit::new(c.x, c.y, 15.0).unwrap(),
            spec: default_spec(&scene),
            seed: 0,
        },
    );
    assert!(matches!(res, Err(Error::TooFewCorrespondences { .. })));
}
