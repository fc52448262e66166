//! LiDAR points drawn over a camera image.

use std::collections::BTreeSet;

use infraloc_core::{CameraIntrinsics, CameraPose, GrayImage, LidarPoint};

/// Marker color of projected points.
pub const MARKER: [u8; 3] = [0, 255, 255];

#[derive(Clone, Debug)]
pub struct Overlay {
    pub image: image::RgbImage,
    /// Points that project inside the image.
    pub projected: usize,
    /// Distinct pixels painted with [`MARKER`].
    pub marked: usize,
}

/// Gray image promoted to RGB with every in-view point as a 1-px marker at
/// its nearest pixel.
pub fn draw_overlay(
    gray: &GrayImage,
    intrinsics: &CameraIntrinsics,
    pose: &CameraPose,
    points: &[LidarPoint],
) -> Overlay {
    let (w, h) = gray.dimensions();
    let mut image = image::RgbImage::from_fn(w, h, |u, v| {
        let g = gray.get(u, v);
        image::Rgb([g, g, g])
    });
    let mut pixels = BTreeSet::new();
    let mut projected = 0;
    for p in points {
        let Some(px) = intrinsics.project(pose, &p.position()) else {
            continue;
        };
        let (u, v) = (px[0].round(), px[1].round());
        if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
            continue;
        }
        projected += 1;
        pixels.insert((u as u32, v as u32));
    }
    for &(u, v) in &pixels {
        image.put_pixel(u, v, image::Rgb(MARKER));
    }
    Overlay {
        image,
        projected,
        marked: pixels.len(),
    }
}

/// Number of pixels equal to [`MARKER`]; gray pixels can never match it.
pub fn count_markers(image: &image::RgbImage) -> usize {
    image.pixels().filter(|p| p.0 == MARKER).count()
}
