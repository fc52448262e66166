//! Command-line interface.
//!
//! Exit codes: 0 success, 1 output failure, 2 input error, 3 PnP failure,
//! 4 MI failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use infraloc_core::eval::{self, CheckPoint};
use infraloc_core::mi::{self, GridSearchConfig, Sequential};
use infraloc_core::pnp::{self, RansacConfig};
use infraloc_core::rectify::{build_rectification_map, rectify_image, RectificationSpec};
use infraloc_core::synth::{self, SceneStyle, TrialConfig, STANDARD_EXTENT};
use infraloc_core::{CameraIntrinsics, CameraPose, GpsInit, GrayImage, LidarGroundMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::exec::{resolve_threads, RayonExecutor};
use crate::formats;
use crate::manifest::{Manifest, Timing};
use crate::overlay::draw_overlay;
use crate::pose_doc::{read_pose, MiDocument, PoseDocument};

pub const EXIT_OUTPUT: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_PNP: u8 = 3;
pub const EXIT_MI: u8 = 4;

/// Error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: Error,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

trait ExitCode<T> {
    fn exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> ExitCode<T> for Result<T, E> {
    fn exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(
    name = "infraloc",
    version,
    about = "Fisheye camera localization in a satellite + LiDAR prior map"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic scene bundle with ground truth.
    Synth(SynthArgs),
    /// Resample a fisheye image into a perspective view.
    Rectify(RectifyArgs),
    /// Initial pose from rectified-image / satellite matches.
    InitPnp(InitPnpArgs),
    /// Refine a pose by mutual-information grid search.
    RefineMi(RefineMiArgs),
    /// Reprojection error of candidate poses on annotated check points.
    Evaluate(EvaluateArgs),
    /// Robustness trials from perturbed starts on a synthetic scene.
    Trials(TrialsArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Style {
    /// Noisy, supersampled render with a photometric gap to the satellite layer.
    Standard,
    /// Exact single-ray render, satellite equals reflectivity.
    Noiseless,
}

impl Style {
    pub fn scene_style(self) -> SceneStyle {
        match self {
            Style::Standard => SceneStyle::standard(),
            Style::Noiseless => SceneStyle::noiseless(),
        }
    }
}

/// Comma-separated floats, exactly `N` of them.
fn parse_floats<const N: usize>(text: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{s}` is not a number"))
        })
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated values, got {}", v.len()))
}

fn parse_gps(text: &str) -> Result<GpsInit, String> {
    formats::parse_gps_init(text)
}

/// `hx,hy,hz,hpsi_deg:sx,sy,sz,spsi_deg`: half ranges then steps, meters and degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_range: [f64; 4],
    pub step: [f64; 4],
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (h, st) = s
            .split_once(':')
            .ok_or_else(|| "expected `hx,hy,hz,hpsi_deg:sx,sy,sz,spsi_deg`".to_string())?;
        Ok(Self {
            half_range: parse_floats::<4>(h)?,
            step: parse_floats::<4>(st)?,
        })
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Search box and first-stage step, `hx,hy,hz,hpsi_deg:sx,sy,sz,spsi_deg`.
    #[arg(long, default_value = "2,2,0.5,5:0.2,0.2,0.1,0.5")]
    pub grid: GridSpec,
    #[arg(long, default_value_t = GridSearchConfig::default().stages)]
    pub stages: usize,
    /// Step divisor between stages.
    #[arg(long, default_value_t = GridSearchConfig::default().shrink)]
    pub shrink: f64,
    /// In-view points below which a cell is invalid.
    #[arg(long, default_value_t = GridSearchConfig::default().min_points)]
    pub min_points: usize,
    /// Radius around the initial camera center for LiDAR point selection, meters.
    #[arg(long, default_value_t = GridSearchConfig::default().point_radius)]
    pub point_radius: f64,
    /// Cap on LiDAR points used by the search.
    #[arg(long, default_value_t = GridSearchConfig::default().max_points)]
    pub max_points: usize,
}

impl GridArgs {
    pub fn config(&self) -> GridSearchConfig {
        let rad = |v: [f64; 4]| [v[0], v[1], v[2], v[3].to_radians()];
        GridSearchConfig {
            half_range: rad(self.grid.half_range),
            step: rad(self.grid.step),
            stages: self.stages,
            shrink: self.shrink,
            min_points: self.min_points,
            point_radius: self.point_radius,
            max_points: self.max_points,
            roll_pitch: None,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct RectArgs {
    /// Focal length of the rectified view [default: fx / 2].
    #[arg(long)]
    pub rect_focal: Option<f64>,
    /// [default: fisheye width]
    #[arg(long)]
    pub rect_width: Option<u32>,
    /// [default: fisheye height]
    #[arg(long)]
    pub rect_height: Option<u32>,
}

impl RectArgs {
    pub fn spec(&self, intr: &CameraIntrinsics) -> RectificationSpec {
        let d = RectificationSpec::default_for(intr);
        RectificationSpec {
            focal: self.rect_focal.unwrap_or(d.focal),
            width: self.rect_width.unwrap_or(d.width),
            height: self.rect_height.unwrap_or(d.height),
            rotation: d.rotation,
        }
    }
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct OutArgs {
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, Default, Args, Serialize, Deserialize)]
pub struct ThreadArgs {
    /// Worker threads [env: INFRALOC_THREADS, default: available cores].
    #[arg(long)]
    #[serde(skip)]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Style::Standard)]
    pub style: Style,
    /// Side length of the square map, meters.
    #[arg(long, default_value_t = STANDARD_EXTENT)]
    pub extent: f64,
    /// Number of fabricated matches.
    #[arg(long, default_value_t = 30)]
    pub matches: usize,
    /// Share of matches with a random satellite pixel.
    #[arg(long, default_value_t = 0.3)]
    pub outliers: f64,
    /// Gaussian noise on both pixels of every match, pixels.
    #[arg(long, default_value_t = 1.0)]
    pub pixel_noise: f64,
    /// Offset of the GPS fix from the true camera position, `dx,dy` meters.
    #[arg(long, default_value = "0,0", value_parser = parse_floats::<2>, allow_hyphen_values = true)]
    pub gps_offset: [f64; 2],
    #[arg(long, default_value_t = 20.0)]
    pub gps_radius: f64,
    /// Cap on annotated check points.
    #[arg(long, default_value_t = 200)]
    pub check_points: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct RectifyArgs {
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Fisheye image (PNG or PGM).
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub rect: RectArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct MapArgs {
    /// Satellite raster (PNG or PGM).
    #[arg(long)]
    pub sat: PathBuf,
    #[arg(long)]
    pub world_file: PathBuf,
    /// LiDAR CSV `x,y,z,reflectivity`.
    #[arg(long)]
    pub lidar: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct InitPnpArgs {
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    pub map: MapArgs,
    /// CSV `u_rect,v_rect,u_sat,v_sat[,inlier]`, satellite pixels in the GPS crop.
    #[arg(long)]
    pub matches: PathBuf,
    /// GPS fix and search radius, `x,y,r` meters.
    #[arg(long, value_parser = parse_gps, allow_hyphen_values = true)]
    pub gps_init: GpsInit,
    /// RANSAC inlier threshold, rectified pixels.
    #[arg(long, default_value_t = RansacConfig::default().threshold)]
    pub ransac_threshold: f64,
    #[arg(long, default_value_t = RansacConfig::default().confidence)]
    pub confidence: f64,
    #[arg(long, default_value_t = RansacConfig::default().max_iterations)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = RansacConfig::default().seed)]
    pub seed: u64,
    #[command(flatten)]
    pub rect: RectArgs,
    /// Overlay point selection radius, meters.
    #[arg(long, default_value_t = GridSearchConfig::default().point_radius)]
    pub point_radius: f64,
    /// Cap on overlay points.
    #[arg(long, default_value_t = GridSearchConfig::default().max_points)]
    pub max_points: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct RefineMiArgs {
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub lidar: PathBuf,
    /// Initial pose JSON, e.g. the output of `init-pnp`.
    #[arg(long)]
    pub pose: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Also dump every evaluated cell of each stage.
    #[arg(long)]
    pub dump_grid: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub threads: ThreadArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

/// `LABEL=path`, or a bare path labelled by its file stem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPose {
    pub label: String,
    pub path: PathBuf,
}

impl std::str::FromStr for LabeledPose {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (label, path) = match s.split_once('=') {
            Some((l, p)) => (l.trim().to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(s);
                let l = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("pose")
                    .to_string();
                (l, p)
            }
        };
        if label.is_empty() || label.contains(',') {
            return Err(format!("bad pose label in `{s}`"));
        }
        Ok(Self { label, path })
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// CSV `x,y,z,u,v`: world points and their annotated fisheye pixels.
    #[arg(long)]
    pub checkpoints: PathBuf,
    /// Candidate pose, `LABEL=pose.json`; repeat to compare.
    #[arg(long = "pose", required = true)]
    pub poses: Vec<LabeledPose>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TrialsArgs {
    /// Scene seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Style::Standard)]
    pub style: Style,
    #[arg(long, default_value_t = STANDARD_EXTENT)]
    pub extent: f64,
    #[arg(long, default_value_t = TrialConfig::default().trials)]
    pub trials: usize,
    /// Largest start offset, `x,y,z,psi_deg`.
    #[arg(long, default_value = "1,1,0.3,5", value_parser = parse_floats::<4>)]
    pub perturbation: [f64; 4],
    /// Seed of the start offsets.
    #[arg(long, default_value_t = 0)]
    pub suite_seed: u64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub threads: ThreadArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub threads: ThreadArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Rectify(a) => cmd_rectify(a),
        Command::InitPnp(a) => cmd_init_pnp(a),
        Command::RefineMi(a) => cmd_refine_mi(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Trials(a) => cmd_trials(a),
        Command::Rerun(a) => cmd_rerun(a),
    }
}

fn absolute(path: &mut PathBuf) -> CmdResult {
    *path = std::fs::canonicalize(&*path)
        .map_err(|e| Error::io(path, e))
        .exit(EXIT_INPUT)?;
    Ok(())
}

fn prepare_out_dir(out: &OutArgs) -> CmdResult {
    if out.out_dir.as_os_str().is_empty() {
        return Err(Error::Invalid("--out-dir is required".into())).exit(EXIT_INPUT);
    }
    std::fs::create_dir_all(&out.out_dir)
        .map_err(|e| Error::io(&out.out_dir, e))
        .exit(EXIT_OUTPUT)
}

fn load_intrinsics_and_image(
    intr: &Path,
    image: &Path,
) -> Result<(CameraIntrinsics, GrayImage), Failure> {
    let intr = formats::read_intrinsics(intr).exit(EXIT_INPUT)?;
    let img = formats::read_gray_image(image).exit(EXIT_INPUT)?;
    if img.dimensions() != (intr.width, intr.height) {
        return Err(Error::parse(
            image,
            format!(
                "image is {}x{}, the intrinsics expect {}x{}",
                img.width(),
                img.height(),
                intr.width,
                intr.height
            ),
        ))
        .exit(EXIT_INPUT);
    }
    Ok((intr, img))
}

fn cmd_synth(args: SynthArgs) -> CmdResult {
    prepare_out_dir(&args.out)?;
    let dir = &args.out.out_dir;
    let mut timing = Timing::start("synth", 1);
    let style = args.style.scene_style();
    let scene = synth::generate_scene(args.seed, args.extent, &style).exit(EXIT_INPUT)?;
    let fisheye = synth::render_fisheye(&scene).exit(EXIT_INPUT)?;
    timing.lap("scene");
    let c = scene.gt_pose.center();
    let gps = GpsInit::new(
        c.x + args.gps_offset[0],
        c.y + args.gps_offset[1],
        args.gps_radius,
    )
    .exit(EXIT_INPUT)?;
    let fab_params = synth::FabricationParams {
        count: args.matches,
        outlier_fraction: args.outliers,
        pixel_noise: args.pixel_noise,
        gps,
        spec: synth::default_spec(&scene),
        seed: args.seed,
    };
    let fab = synth::fabricate_correspondences(&scene, &fab_params).exit(EXIT_INPUT)?;
    let checks = synth::check_points(&scene, args.check_points);
    timing.lap("fabrication");

    let out = |name: &str| dir.join(name);
    let sat = &scene.map.satellite;
    formats::write_intrinsics(&out("intrinsics.txt"), scene.intrinsics()).exit(EXIT_OUTPUT)?;
    formats::write_gray_image(&out("fisheye.png"), &fisheye).exit(EXIT_OUTPUT)?;
    formats::write_gray_image(&out("satellite.png"), sat.raster()).exit(EXIT_OUTPUT)?;
    formats::write_bytes(
        &out("satellite.wld"),
        formats::format_world_file(sat.resolution(), sat.origin()).as_bytes(),
    )
    .exit(EXIT_OUTPUT)?;
    formats::write_lidar_csv(&out("lidar.csv"), scene.map.lidar.points()).exit(EXIT_OUTPUT)?;
    PoseDocument::from_pose(&scene.gt_pose)
        .write(&out("gt_pose.json"))
        .exit(EXIT_OUTPUT)?;
    formats::write_matches(&out("matches.csv"), &fab.matches).exit(EXIT_OUTPUT)?;
    formats::write_checkpoints(&out("checkpoints.csv"), &checks).exit(EXIT_OUTPUT)?;
    formats::write_bytes(
        &out("gps_init.txt"),
        format!("{}\n", formats::format_gps_init(&gps)).as_bytes(),
    )
    .exit(EXIT_OUTPUT)?;
    timing.lap("write");
    let config = serde_json::json!({ "style": style, "fabrication": fab_params });
    Manifest::new(&Command::Synth(args.clone()), config)
        .write(dir)
        .exit(EXIT_OUTPUT)?;
    timing.write(dir).exit(EXIT_OUTPUT)?;
    println!(
        "scene {} written to {}: {} LiDAR points, {} matches, {} check points",
        args.seed,
        dir.display(),
        scene.map.lidar.len(),
        fab.matches.len(),
        checks.len()
    );
    Ok(())
}

fn cmd_rectify(mut args: RectifyArgs) -> CmdResult {
    absolute(&mut args.intrinsics)?;
    absolute(&mut args.image)?;
    prepare_out_dir(&args.out)?;
    let dir = &args.out.out_dir;
    let mut timing = Timing::start("rectify", 1);
    let (intr, img) = load_intrinsics_and_image(&args.intrinsics, &args.image)?;
    let spec = args.rect.spec(&intr);
    spec.validate().exit(EXIT_INPUT)?;
    let map = build_rectification_map(&intr, &spec);
    let rect = rectify_image(&img, &map).exit(EXIT_INPUT)?;
    timing.lap("rectify");
    let path = dir.join("rectified.png");
    formats::write_gray_image(&path, &rect).exit(EXIT_OUTPUT)?;
    let config = serde_json::json!({ "intrinsics": intr, "rectification": spec });
    Manifest::new(&Command::Rectify(args.clone()), config)
        .write(dir)
        .exit(EXIT_OUTPUT)?;
    timing.write(dir).exit(EXIT_OUTPUT)?;
    println!("{}", path.display());
    Ok(())
}

/// Overlay of `points` through `pose`, saved as `name`; returns (projected, marked).
fn write_overlay(
    dir: &Path,
    name: &str,
    img: &GrayImage,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    points: &[infraloc_core::LidarPoint],
) -> Result<(usize, usize), Failure> {
    let o = draw_overlay(img, intr, pose, points);
    formats::write_rgb_image(&dir.join(name), &o.image).exit(EXIT_OUTPUT)?;
    Ok((o.projected, o.marked))
}

fn cmd_init_pnp(mut args: InitPnpArgs) -> CmdResult {
    for p in [
        &mut args.intrinsics,
        &mut args.image,
        &mut args.map.sat,
        &mut args.map.world_file,
        &mut args.map.lidar,
        &mut args.matches,
    ] {
        absolute(p)?;
    }
    prepare_out_dir(&args.out)?;
    let dir = &args.out.out_dir;
    let mut timing = Timing::start("init-pnp", 1);
    let (intr, img) = load_intrinsics_and_image(&args.intrinsics, &args.image)?;
    let prior = formats::load_prior_map(&args.map.sat, &args.map.world_file, &args.map.lidar)
        .exit(EXIT_INPUT)?;
    let matches = formats::read_matches(&args.matches).exit(EXIT_INPUT)?;
    let spec = args.rect.spec(&intr);
    spec.validate().exit(EXIT_INPUT)?;
    let ransac = RansacConfig {
        threshold: args.ransac_threshold,
        confidence: args.confidence,
        max_iterations: args.max_iterations,
        seed: args.seed,
    };
    ransac.validate().exit(EXIT_INPUT)?;
    let crop = prior.satellite.crop(&args.gps_init).exit(EXIT_INPUT)?;
    timing.lap("load");

    let lifted = pnp::lift_correspondences(&matches, &crop, &prior.lidar).exit(EXIT_PNP)?;
    let fallbacks = lifted.iter().filter(|p| p.height_fallback).count();
    if fallbacks > 0 {
        eprintln!("warning: {fallbacks} matches had no LiDAR height, z = 0 used");
    }
    let result = pnp::ransac_pnp(&lifted, &spec, &ransac).map_err(|e| {
        eprintln!(
            "PnP failed on {} matches ({} lifted, threshold {} px, {} iterations max)",
            matches.len(),
            lifted.len(),
            ransac.threshold,
            ransac.max_iterations
        );
        e
    });
    let result = result.exit(EXIT_PNP)?;
    timing.lap("pnp");

    let selection = GridSearchConfig {
        point_radius: args.point_radius,
        max_points: args.max_points,
        ..GridSearchConfig::default()
    };
    selection.validate().exit(EXIT_INPUT)?;
    let points = selection.select_points(&prior.lidar, &result.pose);
    let (projected, marked) =
        write_overlay(dir, "pnp_overlay.png", &img, &intr, &result.pose, &points)?;
    timing.lap("overlay");

    let config = serde_json::json!({
        "intrinsics": intr,
        "rectification": spec,
        "ransac": ransac,
        "gps_init": args.gps_init,
        "overlay": { "point_radius": args.point_radius, "max_points": args.max_points },
    });
    let manifest = Manifest::new(&Command::InitPnp(args.clone()), config);
    let mut doc = PoseDocument::from_pose(&result.pose);
    doc.inliers = Some(result.inliers.clone());
    doc.mean_error = Some(result.mean_error);
    doc.iterations = Some(result.iterations);
    doc.n_points = Some(projected);
    doc.overlay_points = Some(marked);
    doc.manifest = Some(manifest.clone());
    doc.write(&dir.join("pnp_pose.json")).exit(EXIT_OUTPUT)?;
    manifest.write(dir).exit(EXIT_OUTPUT)?;
    timing.write(dir).exit(EXIT_OUTPUT)?;
    let c = result.pose.center();
    println!(
        "PnP: {}/{} inliers, mean error {:.3} px, center ({:.3}, {:.3}, {:.3})",
        result.inliers.len(),
        matches.len(),
        result.mean_error,
        c.x,
        c.y,
        c.z
    );
    Ok(())
}

const AXIS_NAMES: [&str; 4] = ["x", "y", "z", "psi"];

/// File name of a slice over `axes`, e.g. `slice_x_psi.csv`.
pub fn slice_file_name(axes: &[usize]) -> String {
    let names: Vec<&str> = axes.iter().map(|&d| AXIS_NAMES[d]).collect();
    format!("slice_{}.csv", names.join("_"))
}

fn cmd_refine_mi(mut args: RefineMiArgs) -> CmdResult {
    for p in [
        &mut args.intrinsics,
        &mut args.image,
        &mut args.lidar,
        &mut args.pose,
    ] {
        absolute(p)?;
    }
    prepare_out_dir(&args.out)?;
    let dir = &args.out.out_dir;
    let threads = resolve_threads(args.threads.threads).exit(EXIT_INPUT)?;
    let exec = RayonExecutor::new(threads).exit(EXIT_INPUT)?;
    let mut timing = Timing::start("refine-mi", threads);
    let (intr, img) = load_intrinsics_and_image(&args.intrinsics, &args.image)?;
    let points = formats::read_lidar_csv(&args.lidar).exit(EXIT_INPUT)?;
    let lidar = LidarGroundMap::new(points)
        .map_err(|e| Error::parse(&args.lidar, e.to_string()))
        .exit(EXIT_INPUT)?;
    let init = read_pose(&args.pose).exit(EXIT_INPUT)?;
    let cfg = args.grid.config();
    cfg.validate().exit(EXIT_INPUT)?;
    timing.lap("load");

    let selected = cfg.select_points(&lidar, &init);
    let result =
        mi::grid_search_points(&init, &cfg, &img, &intr, &selected, &exec).exit(EXIT_MI)?;
    timing.lap("grid_search");
    let slices = mi::mi_slices(&init, &cfg, &img, &intr, &selected, &exec).exit(EXIT_MI)?;
    timing.lap("slices");

    for s in &slices {
        formats::write_evaluations(&dir.join(slice_file_name(&s.axes)), &s.evaluations)
            .exit(EXIT_OUTPUT)?;
    }
    if args.dump_grid {
        for (k, stage) in result.stages.iter().enumerate() {
            formats::write_evaluations(
                &dir.join(format!("grid_stage{}.csv", k + 1)),
                &stage.evaluations,
            )
            .exit(EXIT_OUTPUT)?;
        }
    }
    let (projected, marked) =
        write_overlay(dir, "mi_overlay.png", &img, &intr, &result.pose, &selected)?;
    timing.lap("write");

    let config = serde_json::json!({ "intrinsics": intr, "grid": cfg });
    let manifest = Manifest::new(&Command::RefineMi(args.clone()), config);
    let mut doc = PoseDocument::from_pose(&result.pose);
    doc.n_points = Some(projected);
    doc.overlay_points = Some(marked);
    doc.mi = Some(MiDocument::new(
        &result.best,
        &result.initial,
        result.roll_pitch,
        result.points_used,
        result.evaluations(),
    ));
    doc.manifest = Some(manifest.clone());
    doc.write(&dir.join("mi_pose.json")).exit(EXIT_OUTPUT)?;
    manifest.write(dir).exit(EXIT_OUTPUT)?;
    timing.write(dir).exit(EXIT_OUTPUT)?;
    let t = result.best.theta;
    println!(
        "MI {:.6} -> {:.6} nats over {} cells; theta ({:.3}, {:.3}, {:.3}, {:.3} deg)",
        result.initial.mi,
        result.best.mi,
        result.evaluations(),
        t.x,
        t.y,
        t.z,
        t.yaw.to_degrees()
    );
    Ok(())
}

/// Per-pose errors of one evaluation run.
#[derive(Clone, Debug, Serialize)]
pub struct PoseReport {
    pub label: String,
    /// Mean over check points that project into the image; `null` if none do.
    pub mean_error: Option<f64>,
    pub projected: usize,
    pub errors: Vec<Option<f64>>,
}

/// `Average Reprojection Error with A = x pixel, and with B = y pixel`.
pub fn report_line(reports: &[PoseReport]) -> String {
    let parts: Vec<String> = reports
        .iter()
        .map(|r| match r.mean_error {
            Some(e) => format!("with {} = {:.2} pixel", r.label, e),
            None => format!("with {} = n/a", r.label),
        })
        .collect();
    format!("Average Reprojection Error {}", parts.join(", and "))
}

fn cmd_evaluate(mut args: EvaluateArgs) -> CmdResult {
    absolute(&mut args.intrinsics)?;
    absolute(&mut args.checkpoints)?;
    for p in &mut args.poses {
        absolute(&mut p.path)?;
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = args.poses.iter().find(|p| !seen.insert(p.label.clone())) {
        return Err(Error::Invalid(format!(
            "pose label `{}` used twice",
            dup.label
        )))
        .exit(EXIT_INPUT);
    }
    prepare_out_dir(&args.out)?;
    let dir = &args.out.out_dir;
    let timing = Timing::start("evaluate", 1);
    let intr = formats::read_intrinsics(&args.intrinsics).exit(EXIT_INPUT)?;
    let checks: Vec<CheckPoint> = formats::read_checkpoints(&args.checkpoints).exit(EXIT_INPUT)?;
    if checks.is_empty() {
        return Err(Error::parse(&args.checkpoints, "no check points")).exit(EXIT_INPUT);
    }
    let mut reports = Vec::new();
    for p in &args.poses {
        let pose = read_pose(&p.path).exit(EXIT_INPUT)?;
        let errors = eval::reprojection_errors(&intr, &pose, &checks);
        reports.push(PoseReport {
            label: p.label.clone(),
            mean_error: eval::mean_error(&errors),
            projected: errors.iter().flatten().count(),
            errors,
        });
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["x", "y", "z", "u", "v"].map(String::from).to_vec();
    header.extend(reports.iter().map(|r| format!("error_{}", r.label)));
    let csv_err = |e: csv::Error| Failure {
        code: EXIT_OUTPUT,
        error: Error::Invalid(e.to_string()),
    };
    w.write_record(&header).map_err(csv_err)?;
    for (i, c) in checks.iter().enumerate() {
        let mut row = vec![
            c.world.x.to_string(),
            c.world.y.to_string(),
            c.world.z.to_string(),
            c.pixel[0].to_string(),
            c.pixel[1].to_string(),
        ];
        row.extend(
            reports
                .iter()
                .map(|r| r.errors[i].map_or(String::new(), |e| e.to_string())),
        );
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure {
        code: EXIT_OUTPUT,
        error: Error::Invalid(e.to_string()),
    })?;
    formats::write_bytes(&dir.join("report.csv"), &bytes).exit(EXIT_OUTPUT)?;

    let line = report_line(&reports);
    let summary: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "label": r.label,
                "mean_error": r.mean_error,
                "projected": r.projected,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "check_points": checks.len(),
        "poses": summary,
        "summary": line,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    formats::write_bytes(&dir.join("report.json"), text.as_bytes()).exit(EXIT_OUTPUT)?;
    Manifest::new(
        &Command::Evaluate(args.clone()),
        serde_json::json!({ "intrinsics": intr }),
    )
    .write(dir)
    .exit(EXIT_OUTPUT)?;
    timing.write(dir).exit(EXIT_OUTPUT)?;
    println!("{line}");
    Ok(())
}

fn cmd_trials(args: TrialsArgs) -> CmdResult {
    prepare_out_dir(&args.out)?;
    let dir = &args.out.out_dir;
    let threads = resolve_threads(args.threads.threads).exit(EXIT_INPUT)?;
    let pool = RayonExecutor::new(threads).exit(EXIT_INPUT)?;
    let mut timing = Timing::start("trials", threads);
    let grid = args.grid.config();
    grid.validate().exit(EXIT_INPUT)?;
    let p = args.perturbation;
    let cfg = TrialConfig {
        trials: args.trials,
        perturbation: [p[0], p[1], p[2], p[3].to_radians()],
        grid,
        seed: args.suite_seed,
        ..TrialConfig::default()
    };
    if cfg.trials == 0
        || cfg
            .perturbation
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
    {
        return Err(Error::Invalid(
            "need at least one trial and non-negative perturbations".into(),
        ))
        .exit(EXIT_INPUT);
    }
    let scene = synth::generate_scene(args.seed, args.extent, &args.style.scene_style())
        .exit(EXIT_INPUT)?;
    let image = synth::render_fisheye(&scene).exit(EXIT_INPUT)?;
    timing.lap("scene");
    let outcomes = run_trials_parallel(&scene, &image, &cfg, &pool).exit(EXIT_MI)?;
    timing.lap("trials");
    let summary = synth::summarize(&outcomes, &synth::final_step(&cfg.grid));
    formats::write_trials(&dir.join("trials.csv"), &outcomes).exit(EXIT_OUTPUT)?;
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    formats::write_bytes(&dir.join("summary.json"), text.as_bytes()).exit(EXIT_OUTPUT)?;
    Manifest::new(
        &Command::Trials(args.clone()),
        serde_json::json!({ "trials": cfg, "style": args.style.scene_style() }),
    )
    .write(dir)
    .exit(EXIT_OUTPUT)?;
    timing.write(dir).exit(EXIT_OUTPUT)?;
    println!(
        "{}/{} trials converged; mean translation error {:.3} m, mean |yaw| error {:.3} deg; dispersion per final step: translation {:.3}, yaw {:.3}",
        summary.converged,
        summary.trials,
        summary.mean_translation_error,
        summary.mean_abs_yaw_error.to_degrees(),
        summary.translation_dispersion,
        summary.yaw_dispersion
    );
    Ok(())
}

/// Trials spread over the pool, each one single-threaded; output in index order.
pub fn run_trials_parallel(
    scene: &synth::SyntheticScene,
    image: &GrayImage,
    cfg: &TrialConfig,
    pool: &RayonExecutor,
) -> infraloc_core::Result<Vec<synth::TrialOutcome>> {
    pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| synth::run_trial(scene, image, cfg, i, &Sequential))
            .collect()
    })
}

fn cmd_rerun(args: RerunArgs) -> CmdResult {
    let manifest = Manifest::read(&args.manifest).exit(EXIT_INPUT)?;
    let command: Command = serde_json::from_value(manifest.invocation.clone())
        .map_err(|e| Error::parse(&args.manifest, e.to_string()))
        .exit(EXIT_INPUT)?;
    if manifest.version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest written by version {}, running {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let out = args.out;
    let threads = args.threads;
    let command = match command {
        Command::Synth(a) => Command::Synth(SynthArgs { out, ..a }),
        Command::Rectify(a) => Command::Rectify(RectifyArgs { out, ..a }),
        Command::InitPnp(a) => Command::InitPnp(InitPnpArgs { out, ..a }),
        Command::RefineMi(a) => Command::RefineMi(RefineMiArgs { out, threads, ..a }),
        Command::Evaluate(a) => Command::Evaluate(EvaluateArgs { out, ..a }),
        Command::Trials(a) => Command::Trials(TrialsArgs { out, threads, ..a }),
        Command::Rerun(_) => {
            return Err(Error::parse(
                &args.manifest,
                "a rerun manifest cannot be rerun",
            ))
            .exit(EXIT_INPUT)
        }
    };
    run(Cli { command })
}
