//! Prior map: a georeferenced satellite raster and a LiDAR ground-point store
//! expressed in the same world frame.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::{Error, Result, Vec3};

/// Neighbors used by [`LidarGroundMap::ground_height_at`].
pub const HEIGHT_NEIGHBORS: usize = 8;
/// Search radius of [`LidarGroundMap::ground_height_at`], meters.
pub const HEIGHT_RADIUS: f64 = 1.0;
pub const DEFAULT_CELL_SIZE: f64 = 1.0;

/// North-up metric raster. Column index grows with world `+x`, row index with
/// world `-y`.
#[derive(Clone, Debug, PartialEq)]
pub struct SatelliteMap {
    raster: GrayImage,
    resolution: f64,
    /// World position of the center of pixel `(0, 0)` of the uncropped raster.
    anchor: [f64; 2],
    /// Integer pixel offset of this raster inside the uncropped one. Kept
    /// separate so cropping leaves world coordinates bit-identical.
    offset: [i64; 2],
}

impl SatelliteMap {
    pub fn new(raster: GrayImage, resolution: f64, origin: [f64; 2]) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidMap(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if raster.is_empty() {
            return Err(Error::InvalidMap("satellite raster is empty".into()));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::InvalidMap("origin is not finite".into()));
        }
        Ok(Self {
            raster,
            resolution,
            anchor: origin,
            offset: [0, 0],
        })
    }

    pub fn raster(&self) -> &GrayImage {
        &self.raster
    }

    /// Meters per pixel.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// World position of the center of pixel `(0, 0)` of this raster.
    pub fn origin(&self) -> [f64; 2] {
        self.pixel_to_world([0.0, 0.0])
    }

    /// `(x, y) = (origin_x + col * res, origin_y - row * res)`.
    #[inline]
    pub fn pixel_to_world(&self, pixel: [f64; 2]) -> [f64; 2] {
        [
            self.anchor[0] + (pixel[0] + self.offset[0] as f64) * self.resolution,
            self.anchor[1] - (pixel[1] + self.offset[1] as f64) * self.resolution,
        ]
    }

    #[inline]
    pub fn world_to_pixel(&self, xy: [f64; 2]) -> [f64; 2] {
        [
            (xy[0] - self.anchor[0]) / self.resolution - self.offset[0] as f64,
            (self.anchor[1] - xy[1]) / self.resolution - self.offset[1] as f64,
        ]
    }

    /// Square window of side `2 * search_radius` around the GPS position,
    /// clipped to the raster.
    pub fn crop(&self, init: &GpsInit) -> Result<SatelliteMap> {
        let side = (2.0 * init.search_radius / self.resolution).round() as i64;
        let corner =
            self.world_to_pixel([init.x - init.search_radius, init.y + init.search_radius]);
        let c0 = corner[0].round() as i64;
        let r0 = corner[1].round() as i64;
        let (w, h) = (self.raster.width() as i64, self.raster.height() as i64);
        let (cs, ce) = (c0.max(0), (c0 + side).min(w));
        let (rs, re) = (r0.max(0), (r0 + side).min(h));
        if ce <= cs || re <= rs {
            return Err(Error::EmptyCrop);
        }
        let raster = GrayImage::from_fn((ce - cs) as u32, (re - rs) as u32, |x, y| {
            self.raster.get(x + cs as u32, y + rs as u32)
        });
        Ok(SatelliteMap {
            raster,
            resolution: self.resolution,
            anchor: self.anchor,
            offset: [self.offset[0] + cs, self.offset[1] + rs],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub reflectivity: u8,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64, reflectivity: u8) -> Self {
        Self {
            x,
            y,
            z,
            reflectivity,
        }
    }

    /// Range-checked constructor for reflectivity read as a wider integer.
    pub fn checked(x: f64, y: f64, z: f64, reflectivity: i64) -> Result<Self> {
        let r =
            u8::try_from(reflectivity).map_err(|_| Error::ReflectivityOutOfRange(reflectivity))?;
        Ok(Self::new(x, y, z, r))
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

/// Uniform grid over `(x, y)` storing point indices per cell (CSR layout).
#[derive(Clone, Debug, PartialEq)]
struct GridIndex {
    cell: f64,
    min: [f64; 2],
    cols: usize,
    rows: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl GridIndex {
    fn build(points: &[LidarPoint], cell: f64) -> Self {
        if points.is_empty() {
            return Self {
                cell,
                min: [0.0, 0.0],
                cols: 0,
                rows: 0,
                starts: vec![0],
                items: Vec::new(),
            };
        }
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            min[0] = min[0].min(p.x);
            min[1] = min[1].min(p.y);
            max[0] = max[0].max(p.x);
            max[1] = max[1].max(p.y);
        }
        let cols = ((max[0] - min[0]) / cell).floor() as usize + 1;
        let rows = ((max[1] - min[1]) / cell).floor() as usize + 1;
        let mut index = Self {
            cell,
            min,
            cols,
            rows,
            starts: vec![0; cols * rows + 1],
            items: vec![0; points.len()],
        };
        let cells: Vec<usize> = points
            .iter()
            .map(|p| {
                let (c, r) = index.cell_of(p.x, p.y);
                r * cols + c
            })
            .collect();
        for &c in &cells {
            index.starts[c + 1] += 1;
        }
        for i in 0..cols * rows {
            index.starts[i + 1] += index.starts[i];
        }
        let mut fill = index.starts.clone();
        // ascending point order within each cell
        for (i, &c) in cells.iter().enumerate() {
            index.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        index
    }

    #[inline]
    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let c = ((x - self.min[0]) / self.cell).floor().max(0.0) as usize;
        let r = ((y - self.min[1]) / self.cell).floor().max(0.0) as usize;
        (c.min(self.cols - 1), r.min(self.rows - 1))
    }

    /// Candidate indices from all cells overlapping the box, unsorted.
    fn candidates(&self, lo: [f64; 2], hi: [f64; 2], out: &mut Vec<usize>) {
        if self.cols == 0 || hi[0] < self.min[0] || hi[1] < self.min[1] {
            return;
        }
        let (c0, r0) = self.cell_of(lo[0], lo[1]);
        let (c1, r1) = self.cell_of(hi[0], hi[1]);
        for r in r0..=r1 {
            for c in c0..=c1 {
                let cell = r * self.cols + c;
                let (s, e) = (self.starts[cell] as usize, self.starts[cell + 1] as usize);
                out.extend(self.items[s..e].iter().map(|&i| i as usize));
            }
        }
    }
}

/// LiDAR ground points `(x, y, z, reflectivity)` with a uniform-grid index.
#[derive(Clone, Debug, PartialEq)]
pub struct LidarGroundMap {
    points: Vec<LidarPoint>,
    index: GridIndex,
}

impl LidarGroundMap {
    pub fn new(points: Vec<LidarPoint>) -> Result<Self> {
        Self::with_cell_size(points, DEFAULT_CELL_SIZE)
    }

    pub fn with_cell_size(points: Vec<LidarPoint>, cell_size: f64) -> Result<Self> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::InvalidMap(format!(
                "index cell size must be positive, got {cell_size}"
            )));
        }
        if let Some(i) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::InvalidMap(format!(
                "point {i} has non-finite coordinates"
            )));
        }
        let index = GridIndex::build(&points, cell_size);
        Ok(Self { points, index })
    }

    pub fn points(&self) -> &[LidarPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of points with `lo <= (x, y) <= hi`, ascending.
    pub fn query_box(&self, lo: [f64; 2], hi: [f64; 2]) -> Vec<usize> {
        let mut out = Vec::new();
        self.index.candidates(lo, hi, &mut out);
        out.retain(|&i| {
            let p = &self.points[i];
            p.x >= lo[0] && p.x <= hi[0] && p.y >= lo[1] && p.y <= hi[1]
        });
        out.sort_unstable();
        out
    }

    /// Indices of points within `radius` of `center` in `(x, y)`, ascending.
    pub fn query_disc(&self, center: [f64; 2], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.index.candidates(
            [center[0] - radius, center[1] - radius],
            [center[0] + radius, center[1] + radius],
            &mut out,
        );
        let r2 = radius * radius;
        out.retain(|&i| {
            let p = &self.points[i];
            let (dx, dy) = (p.x - center[0], p.y - center[1]);
            dx * dx + dy * dy <= r2
        });
        out.sort_unstable();
        out
    }

    /// Points within the disc, in map order. When more than `max_points`
    /// qualify, exactly `max_points` are kept with the fractional stride
    /// `floor(i * n / max_points)`.
    pub fn query_ground_points(
        &self,
        center: [f64; 2],
        radius: f64,
        max_points: usize,
    ) -> Vec<LidarPoint> {
        let hits = self.query_disc(center, radius);
        stride_subsample(&hits, max_points)
            .into_iter()
            .map(|i| self.points[i])
            .collect()
    }

    /// Inverse-distance-weighted height of the nearest ground points.
    pub fn ground_height_at(&self, xy: [f64; 2]) -> Result<f64> {
        let mut near: Vec<(f64, usize)> = self
            .query_disc(xy, HEIGHT_RADIUS)
            .into_iter()
            .map(|i| {
                let p = &self.points[i];
                ((p.x - xy[0]).hypot(p.y - xy[1]), i)
            })
            .collect();
        if near.is_empty() {
            return Err(Error::OffMap {
                x: xy[0],
                y: xy[1],
                radius: HEIGHT_RADIUS,
            });
        }
        near.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        near.truncate(HEIGHT_NEIGHBORS);
        if near[0].0 < 1e-12 {
            return Ok(self.points[near[0].1].z);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(d, i) in &near {
            let w = 1.0 / (d * d);
            num += w * self.points[i].z;
            den += w;
        }
        Ok(num / den)
    }
}

/// `min(n, max)` items picked as `floor(i * n / max)`; order preserved.
pub fn stride_subsample<T: Copy>(items: &[T], max_points: usize) -> Vec<T> {
    let n = items.len();
    if n <= max_points {
        return items.to_vec();
    }
    (0..max_points)
        .map(|i| items[(i as u128 * n as u128 / max_points as u128) as usize])
        .collect()
}

/// Noisy position fix (no orientation) bounding the search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpsInit {
    pub x: f64,
    pub y: f64,
    pub search_radius: f64,
}

impl GpsInit {
    pub fn new(x: f64, y: f64, search_radius: f64) -> Result<Self> {
        if !(search_radius.is_finite() && search_radius > 0.0) {
            return Err(Error::InvalidMap(format!(
                "search radius must be positive, got {search_radius}"
            )));
        }
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidMap("GPS position is not finite".into()));
        }
        Ok(Self {
            x,
            y,
            search_radius,
        })
    }
}

/// Co-registered satellite raster and LiDAR ground map.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMap {
    pub satellite: SatelliteMap,
    pub lidar: LidarGroundMap,
}
