//! 8-bit grayscale raster with bilinear sampling.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Row-major 8-bit grayscale image. Pixel `(x, y)` has its center at integer
/// coordinates `(x, y)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidImage(
                "buffer length does not match dimensions",
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = value;
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    /// Checks that `(u, v)` can be bilinearly sampled, i.e. lies in
    /// `[0, width - 1] x [0, height - 1]`.
    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }

    /// Bilinear interpolation at `(u, v)`; `None` outside [`GrayImage::contains`].
    #[inline]
    pub fn bilinear(&self, u: f64, v: f64) -> Option<f64> {
        if self.width == 0 || self.height == 0 || !self.contains(u, v) {
            return None;
        }
        Some(self.bilinear_unchecked(u, v))
    }

    /// Bilinear interpolation; the caller guarantees `contains(u, v)`.
    #[inline]
    pub(crate) fn bilinear_unchecked(&self, u: f64, v: f64) -> f64 {
        let (w, h) = (self.width as usize, self.height as usize);
        if w < 2 || h < 2 {
            return self.bilinear_degenerate(u, v);
        }
        // the last row/column is reached with a unit weight on the far texel
        let x0 = (u as usize).min(w - 2);
        let y0 = (v as usize).min(h - 2);
        let ax = u - x0 as f64;
        let ay = v - y0 as f64;
        let i = y0 * w + x0;
        let quad = &self.data[i..i + w + 2];
        let (p00, p10) = (quad[0] as f64, quad[1] as f64);
        let (p01, p11) = (quad[w] as f64, quad[w + 1] as f64);
        let top = p00 + ax * (p10 - p00);
        let bottom = p01 + ax * (p11 - p01);
        top + ay * (bottom - top)
    }

    #[cold]
    fn bilinear_degenerate(&self, u: f64, v: f64) -> f64 {
        let w = self.width as usize;
        let x0 = u as usize;
        let y0 = v as usize;
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(self.height as usize - 1);
        let ax = u - x0 as f64;
        let ay = v - y0 as f64;
        let p00 = self.data[y0 * w + x0] as f64;
        let p10 = self.data[y0 * w + x1] as f64;
        let p01 = self.data[y1 * w + x0] as f64;
        let p11 = self.data[y1 * w + x1] as f64;
        let top = p00 + ax * (p10 - p00);
        let bottom = p01 + ax * (p11 - p01);
        top + ay * (bottom - top)
    }
}

/// Rounds a sampled intensity to the nearest 8-bit level.
#[inline]
pub fn quantize(value: f64) -> u8 {
    // round half up; the cast truncates the non-negative sum
    if !(value >= 0.0) {
        0
    } else if value >= 254.5 {
        255
    } else {
        (value + 0.5) as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_matches_corners_and_midpoints() {
        let img = GrayImage::from_raw(2, 2, vec![0, 100, 50, 150]).unwrap();
        assert_eq!(img.bilinear(0.0, 0.0), Some(0.0));
        assert_eq!(img.bilinear(1.0, 1.0), Some(150.0));
        assert_eq!(img.bilinear(0.5, 0.0), Some(50.0));
        assert_eq!(img.bilinear(0.5, 0.5), Some(75.0));
        assert_eq!(img.bilinear(1.01, 0.0), None);
        assert_eq!(img.bilinear(-0.01, 0.0), None);
    }

    #[test]
    fn constant_image_samples_exactly() {
        let img = GrayImage::filled(7, 5, 93);
        for &(u, v) in &[(0.3, 0.7), (5.99, 3.01), (6.0, 4.0), (2.5, 2.5)] {
            assert_eq!(quantize(img.bilinear(u, v).unwrap()), 93);
        }
    }

    #[test]
    fn raw_length_is_checked() {
        assert!(GrayImage::from_raw(3, 3, vec![0; 8]).is_err());
    }

    #[test]
    fn quantize_clamps() {
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(254.6), 255);
        assert_eq!(quantize(300.0), 255);
        assert_eq!(quantize(127.49), 127);
        assert_eq!(quantize(0.5), 1);
        assert_eq!(quantize(f64::NAN), 0);
    }
}
