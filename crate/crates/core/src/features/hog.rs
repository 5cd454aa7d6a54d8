//! Dalal–Triggs style HOG with one cell per texture block.
//!
//! Each cell histogram is normalized against the four 2×2-cell blocks that
//! contain it, giving `4 × orientations` values per cell. Blocks that would
//! reach past the grid edge reuse the clamped edge cells.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imgio::Plane;
use crate::preproc::BlockGrid;

/// Added to the block L2 norm before dividing.
pub const NORM_EPSILON: f64 = 1e-4;
/// Upper bound applied to every normalized bin.
pub const CLIP: f64 = 0.2;

/// Central-difference gradient at `(x, y)` with replicate borders.
#[inline]
pub fn gradient(image: &Plane, x: usize, y: usize) -> (f64, f64) {
    let (x, y) = (x as isize, y as isize);
    let gx = image.get_clamped(x + 1, y) - image.get_clamped(x - 1, y);
    let gy = image.get_clamped(x, y + 1) - image.get_clamped(x, y - 1);
    (gx, gy)
}

/// Unsigned orientation in `[0, π)`.
#[inline]
pub fn unsigned_angle(gx: f64, gy: f64) -> f64 {
    let mut a = gy.atan2(gx);
    if a < 0.0 {
        a += PI;
    }
    if a >= PI {
        a -= PI;
    }
    a
}

/// Per-cell orientation histograms, magnitude-weighted and averaged over the
/// cell's pixels. Bin `b` is centred on `b·π/n`; votes are split linearly
/// between the two nearest centres. Layout: `[(row, col, bin)]` row-major.
pub fn cell_histograms(image: &Plane, grid: &BlockGrid, orientations: usize) -> Vec<f64> {
    let n = orientations;
    let cell = grid.block_size;
    let bin_width = PI / n as f64;
    let mut hist = vec![0.0; grid.len() * n];
    for y in 0..grid.rows * cell {
        for x in 0..grid.cols * cell {
            let (gx, gy) = gradient(image, x, y);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let u = unsigned_angle(gx, gy) / bin_width;
            let lo = u.floor();
            let frac = u - lo;
            let b0 = (lo as usize) % n;
            let b1 = (b0 + 1) % n;
            let base = ((y / cell) * grid.cols + x / cell) * n;
            hist[base + b0] += (1.0 - frac) * mag;
            hist[base + b1] += frac * mag;
        }
    }
    let scale = 1.0 / grid.pixels_per_block() as f64;
    for h in &mut hist {
        *h *= scale;
    }
    hist
}

/// HOG descriptor for every block of the grid: `4 × orientations` values per
/// block, laid out row-major over the grid.
///
/// Gradients are taken over the covered region only (the image is cropped to
/// whole blocks first).
pub fn hog_grid(image: &Plane, grid: &BlockGrid, orientations: usize) -> Result<Vec<f64>> {
    if orientations == 0 {
        return Err(Error::Config("HOG needs at least one orientation".into()));
    }
    let (cw, ch) = grid.covered();
    if image.width() < cw || image.height() < ch || grid.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}x{} image smaller than one HOG cell",
            image.width(),
            image.height()
        )));
    }
    let cropped;
    let image = if (image.width(), image.height()) == (cw, ch) {
        image
    } else {
        cropped = image.crop(cw, ch);
        &cropped
    };
    let n = orientations;
    let hist = cell_histograms(image, grid, n);
    let (rows, cols) = (grid.rows as isize, grid.cols as isize);
    let cell_energy: Vec<f64> = hist
        .chunks_exact(n)
        .map(|h| h.iter().map(|v| v * v).sum())
        .collect();
    let clamp_r = |r: isize| r.clamp(0, rows - 1) as usize;
    let clamp_c = |c: isize| c.clamp(0, cols - 1) as usize;

    let per_block = 4 * n;
    let mut out = vec![0.0; grid.len() * per_block];
    for (r, c) in grid.blocks() {
        let own = &hist[(r * grid.cols + c) * n..][..n];
        let dst = &mut out[(r * grid.cols + c) * per_block..][..per_block];
        let (ri, ci) = (r as isize, c as isize);
        for (k, (br, bc)) in [(ri - 1, ci - 1), (ri - 1, ci), (ri, ci - 1), (ri, ci)]
            .into_iter()
            .enumerate()
        {
            let mut energy = 0.0;
            for rr in [clamp_r(br), clamp_r(br + 1)] {
                for cc in [clamp_c(bc), clamp_c(bc + 1)] {
                    energy += cell_energy[rr * grid.cols + cc];
                }
            }
            let inv = 1.0 / (energy.sqrt() + NORM_EPSILON);
            for (d, &h) in dst[k * n..(k + 1) * n].iter_mut().zip(own) {
                *d = (h * inv).min(CLIP);
            }
        }
    }
    Ok(out)
}
