//! Laplacian-of-Gaussian filtering and block gridding.

use crate::error::{Error, Result};
use crate::imgio::Plane;

/// Side of the square texture block, in pixels.
pub const BLOCK_SIZE: usize = 16;

/// Square LoG kernel sampled on the integer lattice, shifted to zero sum.
#[derive(Debug, Clone, PartialEq)]
pub struct LogKernel {
    size: usize,
    sigma: f64,
    taps: Vec<f64>,
    /// Mean subtracted from the analytic samples.
    offset: f64,
}

impl LogKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at row `i`, column `j` (both in `0..size`).
    pub fn tap(&self, i: usize, j: usize) -> f64 {
        self.taps[i * self.size + j]
    }

    /// Value that was subtracted from every analytic sample.
    pub fn offset(&self) -> f64 {
        self.offset
    }
}

/// Analytic Laplacian of a unit-mass 2-D Gaussian.
pub fn log_value(x: f64, y: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let r2 = (x * x + y * y) / (2.0 * s2);
    -1.0 / (std::f64::consts::PI * s2 * s2) * (1.0 - r2) * (-r2).exp()
}

pub fn log_kernel(size: usize, sigma: f64) -> Result<LogKernel> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "LoG kernel size must be odd and >= 3, got {size}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "LoG sigma must be positive, got {sigma}"
        )));
    }
    let half = (size / 2) as isize;
    let mut taps = Vec::with_capacity(size * size);
    for i in -half..=half {
        for j in -half..=half {
            taps.push(log_value(j as f64, i as f64, sigma));
        }
    }
    let offset = taps.iter().sum::<f64>() / taps.len() as f64;
    for t in &mut taps {
        *t -= offset;
    }
    Ok(LogKernel {
        size,
        sigma,
        taps,
        offset,
    })
}

/// 2-D correlation with replicate-clamped borders. Output is not rescaled.
pub fn log_filter(image: &Plane, kernel: &LogKernel) -> Result<Plane> {
    let k = kernel.size;
    if image.width() < k || image.height() < k {
        return Err(Error::InvalidInput(format!(
            "image {}x{} smaller than {k}x{k} kernel",
            image.width(),
            image.height()
        )));
    }
    let half = (k / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for (i, row) in kernel.taps.chunks_exact(k).enumerate() {
                let sy = y + i as isize - half;
                for (j, &t) in row.iter().enumerate() {
                    acc += t * image.get_clamped(x + j as isize - half, sy);
                }
            }
            out.push(acc);
        }
    }
    Plane::new(w, h, out)
}

/// Non-overlapping square blocks anchored at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub block_size: usize,
    pub cols: usize,
    pub rows: usize,
}

impl BlockGrid {
    pub fn new(width: usize, height: usize, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Config("block size must be positive".into()));
        }
        if width < block_size || height < block_size {
            return Err(Error::InvalidInput(format!(
                "image {width}x{height} smaller than one {block_size}x{block_size} block"
            )));
        }
        Ok(BlockGrid {
            block_size,
            cols: width / block_size,
            rows: height / block_size,
        })
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Width and height of the region covered by whole blocks.
    pub fn covered(&self) -> (usize, usize) {
        (self.cols * self.block_size, self.rows * self.block_size)
    }

    pub fn pixels_per_block(&self) -> usize {
        self.block_size * self.block_size
    }

    /// Row-major iteration over `(row, col)`.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> {
        let cols = self.cols;
        (0..self.rows).flat_map(move |r| (0..cols).map(move |c| (r, c)))
    }
}

/// Grid of 16×16 blocks; trailing partial blocks are ignored.
pub fn grid_of(image: &Plane) -> Result<BlockGrid> {
    BlockGrid::new(image.width(), image.height(), BLOCK_SIZE)
}

/// Row-major copy of block `(r, c)`.
pub fn block_view(image: &Plane, grid: &BlockGrid, r: usize, c: usize) -> Result<Vec<f64>> {
    if r >= grid.rows || c >= grid.cols {
        return Err(Error::InvalidInput(format!(
            "block ({r}, {c}) outside {}x{} grid",
            grid.rows, grid.cols
        )));
    }
    let b = grid.block_size;
    let mut tile = Vec::with_capacity(b * b);
    for y in r * b..(r + 1) * b {
        let row = &image.data()[y * image.width() + c * b..y * image.width() + (c + 1) * b];
        tile.extend_from_slice(row);
    }
    Ok(tile)
}
