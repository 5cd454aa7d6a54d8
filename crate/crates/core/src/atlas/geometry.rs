//! Keypoints, similarity alignment and nearest-neighbor mask warps.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::LabelMask;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn rotate(self, theta: f64) -> Point {
        let (s, c) = theta.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

fn cross3(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull by monotone chain, counterclockwise (positive cross product),
/// collinear points dropped. Fewer than three vertices means degenerate input.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect();
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter() {
        while hull.len() >= 2 && cross3(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross3(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull.into_iter().map(|(x, y)| Point::new(x as f64, y as f64)).collect()
}

/// Bone centroid, most distal hull vertex, and the hull itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoints {
    pub bone_centroid: Point,
    pub distal_point: Point,
    pub hull: Vec<Point>,
}

impl Keypoints {
    /// Vector from the bone centroid to the distal point.
    pub fn distal_vector(&self) -> Point {
        self.distal_point - self.bone_centroid
    }
}

/// Keypoints of a foreground indicator image given the bone centroid.
///
/// The distal point is the hull vertex farthest from the centroid; exact
/// distance ties go to the smaller `atan2` angle.
pub fn keypoints_from_mask(fg: &[bool], width: usize, centroid: Point) -> Result<Keypoints> {
    if width == 0 || !fg.len().is_multiple_of(width) {
        return Err(Error::InvalidInput("foreground buffer does not match width".into()));
    }
    // per-row extremes are enough for the hull
    let mut pts = Vec::new();
    for (y, row) in fg.chunks_exact(width).enumerate() {
        let first = row.iter().position(|&b| b);
        let last = row.iter().rposition(|&b| b);
        if let (Some(a), Some(b)) = (first, last) {
            pts.push((a as i64, y as i64));
            pts.push((b as i64, y as i64));
        }
    }
    if pts.is_empty() {
        return Err(Error::DegenerateKeypoints("empty foreground".into()));
    }
    let hull = convex_hull(&pts);
    if hull.len() < 3 {
        return Err(Error::DegenerateKeypoints("collinear foreground".into()));
    }
    let distal_point = farthest_vertex(&hull, centroid);
    Ok(Keypoints {
        bone_centroid: centroid,
        distal_point,
        hull,
    })
}

fn farthest_vertex(hull: &[Point], from: Point) -> Point {
    let mut best = hull[0];
    let mut best_d = (best - from).dot(best - from);
    for &v in &hull[1..] {
        let d = (v - from).dot(v - from);
        if d > best_d || (d == best_d && (v - from).angle() < (best - from).angle()) {
            best = v;
            best_d = d;
        }
    }
    best
}

/// Normalize an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Similarity transform from a target frame onto a reference frame:
/// translate by `translation`, then rotate by `rotation` and scale by
/// `scale` about `pivot`:
///
/// `p ↦ pivot + scale · R(rotation) · (p + translation − pivot)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub translation: Point,
    pub rotation: f64,
    pub scale: f64,
    pub pivot: Point,
}

impl Alignment {
    pub fn identity() -> Self {
        Alignment {
            translation: Point::default(),
            rotation: 0.0,
            scale: 1.0,
            pivot: Point::default(),
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        self.pivot + (p + self.translation - self.pivot).rotate(self.rotation) * self.scale
    }

    pub fn apply_inverse(&self, q: Point) -> Point {
        self.pivot - self.translation + (q - self.pivot).rotate(-self.rotation) * (1.0 / self.scale)
    }

    pub fn invert(&self) -> Alignment {
        Alignment {
            translation: self.translation * -1.0,
            rotation: wrap_angle(-self.rotation),
            scale: 1.0 / self.scale,
            pivot: self.pivot - self.translation,
        }
    }
}

/// Alignment carrying `target` keypoints onto `reference` keypoints:
/// centroids coincide, the distal vectors become parallel and equally long.
pub fn compute_alignment(reference: &Keypoints, target: &Keypoints) -> Result<Alignment> {
    let d1 = reference.distal_vector();
    let d2 = target.distal_vector();
    if d2.norm() == 0.0 || !d2.norm().is_finite() {
        return Err(Error::DegenerateKeypoints("target distal vector has zero length".into()));
    }
    if d1.norm() == 0.0 || !d1.norm().is_finite() {
        return Err(Error::DegenerateKeypoints("reference distal vector has zero length".into()));
    }
    Ok(Alignment {
        translation: reference.bone_centroid - target.bone_centroid,
        rotation: wrap_angle(d2.cross(d1).atan2(d2.dot(d1))),
        scale: d1.norm() / d2.norm(),
        pivot: reference.bone_centroid,
    })
}

fn resample(mask: &LabelMask, width: usize, height: usize, map: impl Fn(Point) -> Point) -> LabelMask {
    let mut out = LabelMask::background(width, height).with_palette(mask.palette.clone());
    let (sw, sh) = (mask.width() as f64, mask.height() as f64);
    for y in 0..height {
        for x in 0..width {
            let s = map(Point::new(x as f64, y as f64));
            let (sx, sy) = ((s.x + 0.5).floor(), (s.y + 0.5).floor());
            if sx >= 0.0 && sy >= 0.0 && sx < sw && sy < sh {
                out.set(x, y, mask.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

/// Carry a target-frame mask into the reference frame (`width`×`height`).
pub fn warp_mask(mask: &LabelMask, a: &Alignment, width: usize, height: usize) -> LabelMask {
    resample(mask, width, height, |p| a.apply_inverse(p))
}

/// Carry a reference-frame mask back into the target frame.
pub fn warp_back(mask: &LabelMask, a: &Alignment, width: usize, height: usize) -> LabelMask {
    resample(mask, width, height, |p| a.apply(p))
}
