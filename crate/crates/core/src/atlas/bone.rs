//! Rough bone localization by histogram thresholding.
//!
//! The darkest Otsu class is split into 4-connected components; holes are
//! filled (marrow is bright), components are filtered by area and the most
//! circular one is taken as the bone.

use serde::{Deserialize, Serialize};

use super::geometry::Point;
use crate::error::{Error, Result};
use crate::imgio::GrayImage;

pub const HISTOGRAM_BINS: usize = 256;

/// Area window (in pixels, holes filled) for bone candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoneParams {
    pub min_area: usize,
    pub max_area: usize,
}

impl Default for BoneParams {
    fn default() -> Self {
        BoneParams {
            min_area: 100,
            max_area: 3000,
        }
    }
}

pub fn histogram(image: &GrayImage) -> [u64; HISTOGRAM_BINS] {
    let mut h = [0u64; HISTOGRAM_BINS];
    for &v in image.data() {
        h[bin_of(v)] += 1;
    }
    h
}

#[inline]
fn bin_of(v: f64) -> usize {
    ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

/// Two-class Otsu: last bin of the lower class.
pub fn otsu_threshold(hist: &[u64]) -> Option<usize> {
    let total: u64 = hist.iter().sum();
    let sum: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut s0) = (0u64, 0.0);
    let mut best: Option<(f64, usize)> = None;
    for t in 0..hist.len() - 1 {
        w0 += hist[t];
        s0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let (m0, m1) = (s0 / w0 as f64, (sum - s0) / w1 as f64);
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if best.is_none_or(|(b, _)| between > b) {
            best = Some((between, t));
        }
    }
    best.map(|(_, t)| t)
}

/// Three-class Otsu: last bins `(t1, t2)` of the lower and middle classes,
/// maximizing `Σ ω_k μ_k²`. `None` when fewer than three bins are occupied.
pub fn otsu_three_class(hist: &[u64]) -> Option<(usize, usize)> {
    let n = hist.len();
    let mut cw = vec![0u64; n + 1];
    let mut cs = vec![0.0; n + 1];
    for i in 0..n {
        cw[i + 1] = cw[i] + hist[i];
        cs[i + 1] = cs[i] + i as f64 * hist[i] as f64;
    }
    // class covering bins a..=b
    let term = |a: usize, b: usize| {
        let w = cw[b + 1] - cw[a];
        if w == 0 {
            None
        } else {
            let s = cs[b + 1] - cs[a];
            Some(s * s / w as f64)
        }
    };
    let mut best: Option<(f64, usize, usize)> = None;
    for t1 in 0..n.saturating_sub(2) {
        let Some(a) = term(0, t1) else { continue };
        for t2 in t1 + 1..n - 1 {
            let (Some(b), Some(c)) = (term(t1 + 1, t2), term(t2 + 1, n - 1)) else {
                continue;
            };
            let v = a + b + c;
            if best.is_none_or(|(bv, _, _)| v > bv) {
                best = Some((v, t1, t2));
            }
        }
    }
    best.map(|(_, t1, t2)| (t1, t2))
}

/// Pixels of the darkest intensity class.
pub fn dark_class(image: &GrayImage) -> Vec<bool> {
    let hist = histogram(image);
    let t = match otsu_three_class(&hist) {
        Some((t1, _)) => Some(t1),
        None => otsu_threshold(&hist),
    };
    match t {
        Some(t) => image.data().iter().map(|&v| bin_of(v) <= t).collect(),
        None => vec![false; image.data().len()],
    }
}

/// A connected dark region with its holes filled.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub area: usize,
    /// Number of pixel edges between the region and its outside.
    pub perimeter: usize,
    pub centroid: Point,
}

impl Region {
    /// `4πA / P²`.
    pub fn circularity(&self) -> f64 {
        if self.perimeter == 0 {
            return 0.0;
        }
        4.0 * std::f64::consts::PI * self.area as f64 / (self.perimeter * self.perimeter) as f64
    }
}

/// 4-connected components of `fg`, each returned with holes filled.
pub fn filled_regions(fg: &[bool], width: usize, height: usize) -> Vec<Region> {
    let mut comp = vec![u32::MAX; fg.len()];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..fg.len() {
        if !fg[start] || comp[start] != u32::MAX {
            continue;
        }
        let id = regions.len() as u32;
        let mut pixels = Vec::new();
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (x, y) = (p % width, p / width);
            let mut push = |q: usize| {
                if fg[q] && comp[q] == u32::MAX {
                    comp[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                push(p - 1);
            }
            if x + 1 < width {
                push(p + 1);
            }
            if y > 0 {
                push(p - width);
            }
            if y + 1 < height {
                push(p + width);
            }
        }
        regions.push(fill_and_measure(&pixels, width));
    }
    regions
}

fn fill_and_measure(pixels: &[usize], width: usize) -> Region {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &p in pixels {
        let (x, y) = (p % width, p / width);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    // local canvas with a one-pixel margin
    let (bw, bh) = (x1 - x0 + 3, y1 - y0 + 3);
    let mut inside = vec![false; bw * bh];
    for &p in pixels {
        inside[(p / width - y0 + 1) * bw + (p % width - x0 + 1)] = true;
    }
    // flood the outside from the margin
    let mut outside = vec![false; bw * bh];
    let mut stack = vec![0usize];
    outside[0] = true;
    while let Some(p) = stack.pop() {
        let (x, y) = (p % bw, p / bw);
        let mut visit = |q: usize| {
            if !inside[q] && !outside[q] {
                outside[q] = true;
                stack.push(q);
            }
        };
        if x > 0 {
            visit(p - 1);
        }
        if x + 1 < bw {
            visit(p + 1);
        }
        if y > 0 {
            visit(p - bw);
        }
        if y + 1 < bh {
            visit(p + bw);
        }
    }
    let (mut area, mut perimeter) = (0usize, 0usize);
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 1..bh - 1 {
        for x in 1..bw - 1 {
            let p = y * bw + x;
            if outside[p] {
                continue;
            }
            area += 1;
            sx += (x + x0 - 1) as f64;
            sy += (y + y0 - 1) as f64;
            perimeter += [p - 1, p + 1, p - bw, p + bw]
                .iter()
                .filter(|&&q| outside[q])
                .count();
        }
    }
    Region {
        area,
        perimeter,
        centroid: Point::new(sx / area as f64, sy / area as f64),
    }
}

/// Centroid of the most circular dark component whose filled area lies in
/// the configured window.
pub fn bone_centroid(image: &GrayImage, params: &BoneParams) -> Result<Point> {
    let dark = dark_class(image);
    let regions = filled_regions(&dark, image.width(), image.height());
    let mut best: Option<&Region> = None;
    for r in &regions {
        if r.area < params.min_area || r.area > params.max_area {
            continue;
        }
        if best.is_none_or(|b| r.circularity() > b.circularity()) {
            best = Some(r);
        }
    }
    best.map(|r| r.centroid).ok_or(Error::BoneNotFound)
}
