//! Procedural road scene: reflectivity raster, LiDAR ground grid and a
//! satellite layer with a photometric gap.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::image::{quantize, GrayImage};
use crate::map::{LidarGroundMap, LidarPoint, PriorMap, SatelliteMap};
use crate::{Error, Result, Vec3};

/// Ground surface `z = sx * x + sy * y + a * sin(2 pi x / L) * cos(2 pi y / L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightField {
    pub slope: [f64; 2],
    pub amplitude: f64,
    pub wavelength: f64,
}

impl HeightField {
    pub fn flat() -> Self {
        Self {
            slope: [0.0, 0.0],
            amplitude: 0.0,
            wavelength: 1.0,
        }
    }

    #[inline]
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let plane = self.slope[0] * x + self.slope[1] * y;
        if self.amplitude == 0.0 {
            return plane;
        }
        let k = 2.0 * core::f64::consts::PI / self.wavelength;
        plane + self.amplitude * (k * x).sin() * (k * y).cos()
    }

    /// Lower and upper bound of the height over `|x|, |y| <= half_extent`.
    pub fn bounds(&self, half_extent: f64) -> (f64, f64) {
        let r = (self.slope[0].abs() + self.slope[1].abs()) * half_extent + self.amplitude.abs();
        (-r, r)
    }
}

/// Gray-level transform applied on top of a layer: `offset + contrast * 255 * (v / 255)^gamma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Photometric {
    pub gamma: f64,
    pub contrast: f64,
    pub offset: f64,
}

impl Photometric {
    pub fn identity() -> Self {
        Self {
            gamma: 1.0,
            contrast: 1.0,
            offset: 0.0,
        }
    }

    pub fn apply(&self, v: u8) -> u8 {
        quantize(self.offset + self.contrast * 255.0 * (v as f64 / 255.0).powf(self.gamma))
    }
}

/// Camera response: `gain * reflectivity + bias + N(0, sigma)`, where the
/// reflectivity is averaged over `samples * samples` rays spread across the
/// pixel footprint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderNoise {
    pub gain: f64,
    pub bias: f64,
    pub sigma: f64,
    pub samples: u32,
}

impl RenderNoise {
    /// Identity response with one ray through each pixel center.
    pub fn none() -> Self {
        Self {
            gain: 1.0,
            bias: 0.0,
            sigma: 0.0,
            samples: 1,
        }
    }
}

/// Side length of the standard synthetic map, meters.
pub const STANDARD_EXTENT: f64 = 89.6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneStyle {
    /// Reflectivity and satellite raster resolution, meters per pixel.
    pub resolution: f64,
    /// LiDAR points are placed on every `lidar_stride`-th raster texel.
    pub lidar_stride: usize,
    pub road_width: f64,
    pub camera_height: f64,
    /// Largest |roll| and |pitch| of the ground-truth camera, radians.
    pub max_tilt: f64,
    /// Largest horizontal offset of the camera from the map center, meters.
    pub max_offset: f64,
    pub intrinsics: CameraIntrinsics,
    pub render: RenderNoise,
    pub satellite: Photometric,
    pub height: HeightField,
}

impl SceneStyle {
    /// 400x400 fisheye 6 m above a gently undulating intersection. With
    /// [`STANDARD_EXTENT`] the map holds 224 x 224 LiDAR points.
    pub fn standard() -> Self {
        Self {
            resolution: 0.1,
            lidar_stride: 4,
            road_width: 10.0,
            camera_height: 6.0,
            max_tilt: 1f64.to_radians(),
            max_offset: 1.5,
            intrinsics: CameraIntrinsics::new(320.0, 320.0, 199.5, 199.5, 1.6, 400, 400)
                .with_distortion(-0.02, 0.005, 0.0005, -0.0003),
            render: RenderNoise {
                gain: 0.85,
                bias: 12.0,
                sigma: 2.0,
                samples: 4,
            },
            satellite: Photometric {
                gamma: 0.8,
                contrast: 0.9,
                offset: 10.0,
            },
            height: HeightField {
                slope: [0.004, -0.003],
                amplitude: 0.05,
                wavelength: 16.0,
            },
        }
    }

    /// [`SceneStyle::standard`] without render noise or photometric changes.
    pub fn noiseless() -> Self {
        Self {
            render: RenderNoise::none(),
            satellite: Photometric::identity(),
            ..Self::standard()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(Error::InvalidScene("resolution must be positive"));
        }
        if self.lidar_stride == 0 {
            return Err(Error::InvalidScene("lidar stride must be positive"));
        }
        if !(self.camera_height.is_finite() && self.camera_height > 0.0) {
            return Err(Error::InvalidScene("camera height must be positive"));
        }
        if !(self.road_width > 0.0 && self.max_tilt >= 0.0 && self.max_offset >= 0.0) {
            return Err(Error::InvalidScene("road width, tilt and offset bounds"));
        }
        if !(self.render.sigma >= 0.0
            && self.render.gain.is_finite()
            && self.render.bias.is_finite()
            && self.render.samples >= 1)
        {
            return Err(Error::InvalidScene("render noise parameters"));
        }
        if !(self.height.wavelength > 0.0) {
            return Err(Error::InvalidScene(
                "height field wavelength must be positive",
            ));
        }
        Ok(())
    }
}

/// Axis-aligned painted rectangle in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Marking {
    min: [f64; 2],
    max: [f64; 2],
    value: u8,
}

impl Marking {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x < self.max[0] && y >= self.min[1] && y < self.max[1]
    }
}

const EDGE_LINE: u8 = 205;
const CENTER_LINE: u8 = 235;
const CROSSWALK: u8 = 245;
const STOP_BAR: u8 = 225;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    /// Side length of the square map, meters.
    pub extent: f64,
    pub style: SceneStyle,
    /// Ground-truth reflectivity raster, georeferenced like the satellite layer.
    pub reflectivity: SatelliteMap,
    pub map: PriorMap,
    pub gt_pose: CameraPose,
    /// Corners of painted markings, on the ground surface.
    pub corners: Vec<Vec3>,
}

impl SyntheticScene {
    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.style.intrinsics
    }

    pub fn ground_height(&self, x: f64, y: f64) -> f64 {
        self.style.height.height(x, y)
    }
}

/// Road layout around the intersection at `center`.
fn markings(center: [f64; 2], half_extent: f64, road_width: f64) -> Vec<Marking> {
    let half_road = road_width / 2.0;
    let mut out = Vec::new();
    // along-road and across-road ranges for both roads, relative to `center`
    let mut push = |along_axis: usize, along: (f64, f64), across: (f64, f64), value: u8| {
        let (mut min, mut max) = ([0.0; 2], [0.0; 2]);
        let across_axis = 1 - along_axis;
        min[along_axis] = center[along_axis] + along.0;
        max[along_axis] = center[along_axis] + along.1;
        min[across_axis] = center[across_axis] + across.0;
        max[across_axis] = center[across_axis] + across.1;
        out.push(Marking { min, max, value });
    };
    let reach = 2.0 * half_extent;
    for axis in 0..2 {
        for dir in [-1.0, 1.0] {
            let span = |a: f64, b: f64| if dir > 0.0 { (a, b) } else { (-b, -a) };
            // edge lines stop short of the crosswalks
            for side in [-1.0, 1.0] {
                let off = side * (half_road - 0.3);
                push(axis, span(9.0, reach), (off - 0.1, off + 0.1), EDGE_LINE);
            }
            // dashed center line, 3 m on / 3 m off
            let mut d = 10.0;
            while d < reach {
                push(axis, span(d, d + 3.0), (-0.1, 0.1), CENTER_LINE);
                d += 6.0;
            }
            // crosswalk stripes, 0.5 m wide every 1 m across the road
            let mut c = -half_road + 0.5;
            while c + 0.5 <= half_road - 0.5 + 1e-9 {
                push(axis, span(5.5, 8.5), (c, c + 0.5), CROSSWALK);
                c += 1.0;
            }
            // stop bar over the incoming half
            let lane = if dir > 0.0 {
                (0.2, half_road - 0.3)
            } else {
                (-(half_road - 0.3), -0.2)
            };
            push(axis, span(9.0, 9.4), lane, STOP_BAR);
        }
    }
    out
}

/// Deterministic scene from `seed`. The map is the square `[-extent/2, extent/2]^2`.
pub fn generate_scene(seed: u64, extent: f64, style: &SceneStyle) -> Result<SyntheticScene> {
    style.validate()?;
    if !(extent.is_finite() && extent > 0.0) {
        return Err(Error::InvalidScene("extent must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let res = style.resolution;
    let side = (extent / res).round() as u32;
    if side < 2 {
        return Err(Error::InvalidScene("extent below two raster pixels"));
    }
    let half = side as f64 * res / 2.0;
    let origin = [-half + res / 2.0, half - res / 2.0];

    // intersection center on the raster lattice
    let snap = |v: f64| (v / res).round() * res;
    let center = [
        snap(rng.random_range(-3.0..3.0)),
        snap(rng.random_range(-3.0..3.0)),
    ];
    let on_road = |x: f64, y: f64| {
        (x - center[0]).abs() <= style.road_width / 2.0
            || (y - center[1]).abs() <= style.road_width / 2.0
    };

    // jittered-grid Voronoi patches; each seed has a road and an off-road shade
    let cell = 2.4;
    let cells = (2.0 * half / cell).ceil() as usize + 1;
    let seeds: Vec<([f64; 2], u8, u8)> = (0..cells * cells)
        .map(|k| {
            let (i, j) = ((k % cells) as f64, (k / cells) as f64);
            let p = [
                -half + (i + rng.random_range(0.0..1.0)) * cell,
                -half + (j + rng.random_range(0.0..1.0)) * cell,
            ];
            (p, rng.random_range(40..=90), rng.random_range(120..=175))
        })
        .collect();
    let layout = markings(center, half, style.road_width);

    let raster = GrayImage::from_fn(side, side, |col, row| {
        let x = origin[0] + col as f64 * res;
        let y = origin[1] - row as f64 * res;
        if let Some(m) = layout.iter().rev().find(|m| m.contains(x, y)) {
            return m.value;
        }
        let ci = (((x + half) / cell) as isize).clamp(0, cells as isize - 1);
        let cj = (((y + half) / cell) as isize).clamp(0, cells as isize - 1);
        let mut best = (f64::INFINITY, 0usize);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= cells as isize || j >= cells as isize {
                    continue;
                }
                let k = j as usize * cells + i as usize;
                let p = seeds[k].0;
                let d = (p[0] - x).powi(2) + (p[1] - y).powi(2);
                if d < best.0 {
                    best = (d, k);
                }
            }
        }
        let (_, road, off) = seeds[best.1];
        if on_road(x, y) {
            road
        } else {
            off
        }
    });

    let height = style.height;
    let mut points = Vec::new();
    for row in (0..side).step_by(style.lidar_stride) {
        for col in (0..side).step_by(style.lidar_stride) {
            let x = origin[0] + col as f64 * res;
            let y = origin[1] - row as f64 * res;
            points.push(LidarPoint::new(
                x,
                y,
                height.height(x, y),
                raster.get(col, row),
            ));
        }
    }

    let satellite_raster = GrayImage::from_raw(
        side,
        side,
        raster
            .as_raw()
            .iter()
            .map(|&v| style.satellite.apply(v))
            .collect(),
    )?;
    let reflectivity = SatelliteMap::new(raster, res, origin)?;
    let satellite = SatelliteMap::new(satellite_raster, res, origin)?;

    let mut corners = Vec::new();
    for m in &layout {
        for (x, y) in [
            (m.min[0], m.min[1]),
            (m.max[0], m.min[1]),
            (m.max[0], m.max[1]),
            (m.min[0], m.max[1]),
        ] {
            if x.abs() < half && y.abs() < half {
                corners.push(Vec3::new(x, y, height.height(x, y)));
            }
        }
    }

    let off = style.max_offset;
    let (cx, cy) = if off > 0.0 {
        (rng.random_range(-off..=off), rng.random_range(-off..=off))
    } else {
        (0.0, 0.0)
    };
    let tilt = |rng: &mut ChaCha8Rng| {
        if style.max_tilt > 0.0 {
            rng.random_range(-style.max_tilt..=style.max_tilt)
        } else {
            0.0
        }
    };
    let roll = tilt(&mut rng);
    let pitch = tilt(&mut rng);
    let yaw = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
    let camera_center = Vec3::new(cx, cy, height.height(cx, cy) + style.camera_height);
    let gt_pose = CameraPose::from_euler_center(roll, pitch, yaw, camera_center);

    Ok(SyntheticScene {
        seed,
        extent: 2.0 * half,
        style: *style,
        reflectivity,
        map: PriorMap {
            satellite,
            lidar: LidarGroundMap::new(points)?,
        },
        gt_pose,
        corners,
    })
}
