//! Marginal and joint intensity histograms and their entropies.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of intensity levels per variable.
pub const BINS: usize = 256;

/// Counts of `(x, y)` intensity pairs: `x` is LiDAR reflectivity, `y` the
/// camera intensity at the projected point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntensityHistogram {
    x: Vec<u32>,
    y: Vec<u32>,
    joint: Vec<u32>,
    n: usize,
}

impl Default for IntensityHistogram {
    fn default() -> Self {
        Self::new()
    }
}

impl IntensityHistogram {
    pub fn new() -> Self {
        Self {
            x: vec![0; BINS],
            y: vec![0; BINS],
            joint: vec![0; BINS * BINS],
            n: 0,
        }
    }

    pub fn from_samples(samples: &[(u8, u8)]) -> Self {
        let mut h = Self::new();
        for &(x, y) in samples {
            h.add(x, y);
        }
        h
    }

    #[inline]
    pub fn add(&mut self, x: u8, y: u8) {
        self.x[x as usize] += 1;
        self.y[y as usize] += 1;
        self.joint[(x as usize) << 8 | y as usize] += 1;
        self.n += 1;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn count_x(&self, x: u8) -> u32 {
        self.x[x as usize]
    }

    pub fn count_y(&self, y: u8) -> u32 {
        self.y[y as usize]
    }

    pub fn count_joint(&self, x: u8, y: u8) -> u32 {
        self.joint[(x as usize) << 8 | y as usize]
    }

    pub fn p_x(&self, x: u8) -> f64 {
        self.count_x(x) as f64 / self.n as f64
    }

    pub fn p_y(&self, y: u8) -> f64 {
        self.count_y(y) as f64 / self.n as f64
    }

    pub fn p_joint(&self, x: u8, y: u8) -> f64 {
        self.count_joint(x, y) as f64 / self.n as f64
    }

    /// Histogram of the swapped pairs `(y, x)`.
    pub fn transposed(&self) -> Self {
        let mut joint = vec![0; BINS * BINS];
        for x in 0..BINS {
            for y in 0..BINS {
                joint[y << 8 | x] = self.joint[x << 8 | y];
            }
        }
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
            joint,
            n: self.n,
        }
    }
}

/// Entropies in nats and the mutual information `H_X + H_Y - H_XY`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entropies {
    pub h_x: f64,
    pub h_y: f64,
    pub h_xy: f64,
    pub mi: f64,
}

impl Entropies {
    fn from_parts(h_x: f64, h_y: f64, h_xy: f64) -> Self {
        Self {
            h_x,
            h_y,
            h_xy,
            mi: h_x + h_y - h_xy,
        }
    }
}

#[inline]
fn xlogx(c: usize) -> f64 {
    let c = c as f64;
    c * c.ln()
}

/// Tally of how many bins hold each count. Summing `c ln c` grouped by count,
/// in increasing count order, makes the entropy independent of bin order.
pub(crate) struct CountTally {
    tally: Vec<u32>,
    /// `xlogx(c)` for every representable count `c`.
    weights: Vec<f64>,
    max: usize,
}

impl CountTally {
    pub(crate) fn new(capacity: usize) -> Self {
        let mut t = Self {
            tally: Vec::new(),
            weights: Vec::new(),
            max: 0,
        };
        t.grow(capacity + 1);
        t
    }

    fn grow(&mut self, len: usize) {
        let start = self.weights.len();
        self.tally.resize(len, 0);
        self.weights.extend((start..len).map(xlogx));
    }

    #[inline]
    pub(crate) fn push(&mut self, count: u32) {
        let c = count as usize;
        if c == 0 {
            return;
        }
        if c >= self.tally.len() {
            self.grow(c + 1);
        }
        self.tally[c] += 1;
        self.max = self.max.max(c);
    }

    /// Entropy of the tallied counts over `n` samples; resets the tally.
    pub(crate) fn drain_entropy(&mut self, n: usize) -> f64 {
        let mut acc = 0.0;
        for c in 1..=self.max {
            let m = self.tally[c];
            if m != 0 {
                acc += m as f64 * self.weights[c];
                self.tally[c] = 0;
            }
        }
        self.max = 0;
        let n = n as f64;
        n.ln() - acc / n
    }
}

/// Entropies of a histogram. Fails on an empty histogram.
pub fn mutual_information(hist: &IntensityHistogram) -> Result<Entropies> {
    if hist.n == 0 {
        return Err(Error::NoOverlap);
    }
    let mut tally = CountTally::new(hist.n);
    hist.x.iter().for_each(|&c| tally.push(c));
    let h_x = tally.drain_entropy(hist.n);
    hist.y.iter().for_each(|&c| tally.push(c));
    let h_y = tally.drain_entropy(hist.n);
    hist.joint.iter().for_each(|&c| tally.push(c));
    let h_xy = tally.drain_entropy(hist.n);
    Ok(Entropies::from_parts(h_x, h_y, h_xy))
}

/// Reusable buffers for evaluating many sample sets without reallocating the
/// 64k-bin joint histogram.
pub struct MiWorkspace {
    x: Vec<u32>,
    y: Vec<u32>,
    joint: Vec<u32>,
    touched: Vec<u16>,
    tally: CountTally,
    n: usize,
}

impl Default for MiWorkspace {
    fn default() -> Self {
        Self::new()
    }
}

impl MiWorkspace {
    pub fn new() -> Self {
        Self {
            x: vec![0; BINS],
            y: vec![0; BINS],
            joint: vec![0; BINS * BINS],
            touched: Vec::new(),
            tally: CountTally::new(0),
            n: 0,
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, x: u8, y: u8) {
        self.x[x as usize] += 1;
        self.y[y as usize] += 1;
        let k = (x as usize) << 8 | y as usize;
        if self.joint[k] == 0 {
            self.touched.push(k as u16);
        }
        self.joint[k] += 1;
        self.n += 1;
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    /// Entropies of the accumulated samples (`None` if empty); clears the workspace.
    pub(crate) fn finish(&mut self) -> Option<Entropies> {
        let n = self.n;
        let out = if n == 0 {
            None
        } else {
            self.x.iter().for_each(|&c| self.tally.push(c));
            let h_x = self.tally.drain_entropy(n);
            self.y.iter().for_each(|&c| self.tally.push(c));
            let h_y = self.tally.drain_entropy(n);
            for &k in &self.touched {
                self.tally.push(self.joint[k as usize]);
            }
            let h_xy = self.tally.drain_entropy(n);
            Some(Entropies::from_parts(h_x, h_y, h_xy))
        };
        self.clear();
        out
    }

    pub(crate) fn clear(&mut self) {
        self.x.iter_mut().for_each(|c| *c = 0);
        self.y.iter_mut().for_each(|c| *c = 0);
        for &k in &self.touched {
            self.joint[k as usize] = 0;
        }
        self.touched.clear();
        self.n = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_variables() {
        // X = Y uniform over 4 levels: every entropy and the MI equal ln 4
        let samples: Vec<(u8, u8)> = (0..400)
            .map(|i| ((i % 4) as u8 * 60, (i % 4) as u8 * 60))
            .collect();
        let e = mutual_information(&IntensityHistogram::from_samples(&samples)).unwrap();
        let ln4 = 4f64.ln();
        for v in [e.h_x, e.h_y, e.h_xy, e.mi] {
            assert!((v - ln4).abs() < 1e-12);
        }
    }

    #[test]
    fn independent_variables() {
        let mut samples = Vec::new();
        for a in 0..4u8 {
            for b in 0..8u8 {
                samples.push((a, b * 3));
            }
        }
        let e = mutual_information(&IntensityHistogram::from_samples(&samples)).unwrap();
        assert!(e.mi.abs() < 1e-12);
        assert!((e.h_x - 4f64.ln()).abs() < 1e-12);
        assert!((e.h_y - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_has_zero_entropy() {
        let e = mutual_information(&IntensityHistogram::from_samples(&[(9, 200); 50])).unwrap();
        assert_eq!((e.h_x, e.h_y, e.h_xy, e.mi), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(
            mutual_information(&IntensityHistogram::new()),
            Err(Error::NoOverlap)
        ));
    }

    #[test]
    fn workspace_matches_histogram_bitwise() {
        let samples: Vec<(u8, u8)> = (0..997u32)
            .map(|i| ((i * 37 % 251) as u8, (i * i % 13 + i % 7) as u8))
            .collect();
        let reference = mutual_information(&IntensityHistogram::from_samples(&samples)).unwrap();
        let mut ws = MiWorkspace::new();
        for _ in 0..2 {
            for &(x, y) in &samples {
                ws.add(x, y);
            }
            assert_eq!(ws.finish(), Some(reference));
        }
        assert_eq!(ws.finish(), None);
    }

    #[test]
    fn transpose_swaps_marginals() {
        let samples: Vec<(u8, u8)> = (0..300u32)
            .map(|i| ((i % 17) as u8, (i % 5) as u8))
            .collect();
        let h = IntensityHistogram::from_samples(&samples);
        let a = mutual_information(&h).unwrap();
        let b = mutual_information(&h.transposed()).unwrap();
        assert_eq!(a.mi, b.mi);
        assert_eq!(a.h_x, b.h_y);
        assert_eq!(h.p_joint(3, 3), h.transposed().p_joint(3, 3));
    }
}
