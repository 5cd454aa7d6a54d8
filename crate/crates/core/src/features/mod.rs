//! Per-block texture descriptors.
//!
//! With the default parameters every 16×16 block maps to 54 values:
//!
//! | range    | content                                             |
//! |----------|-----------------------------------------------------|
//! | `0..36`  | HOG, 4 normalizations × 9 unsigned orientations     |
//! | `36..40` | mean, variance, skewness, kurtosis of the raw block  |
//! | `40..44` | the same moments of the LoG-filtered block           |
//! | `44..54` | mean \|coef\| of LL3, H1, V1, D1, H2, V2, D2, H3, V3, D3 |

mod hog;
mod moments;
mod wavelet;

pub use hog::{cell_histograms, gradient, hog_grid, unsigned_angle, CLIP as HOG_CLIP, NORM_EPSILON as HOG_EPSILON};
pub use moments::{block_moments, FLAT_VARIANCE};
pub use wavelet::{haar_dwt, haar_idwt, wavelet_block_features, DetailBands, WaveletPyramid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{GrayImage, Plane};
use crate::preproc::{block_view, log_filter, log_kernel, BlockGrid};

/// Descriptor length for the default parameters.
pub const DESCRIPTOR_LEN: usize = 54;

/// Knobs of the texture descriptor. Defaults reproduce the 54-bin layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub block_size: usize,
    pub orientations: usize,
    pub log_size: usize,
    pub log_sigma: f64,
    pub dwt_levels: usize,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            block_size: 16,
            orientations: 9,
            log_size: 5,
            log_sigma: 1.5,
            dwt_levels: 3,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if self.orientations == 0 {
            return Err(Error::Config("orientations must be positive".into()));
        }
        if self.dwt_levels == 0 || self.dwt_levels > 8 {
            return Err(Error::Config(format!(
                "dwt levels must be in 1..=8, got {}",
                self.dwt_levels
            )));
        }
        if self.block_size == 0 || !self.block_size.is_multiple_of(1 << self.dwt_levels) {
            return Err(Error::Config(format!(
                "block size {} must be a positive multiple of 2^{}",
                self.block_size, self.dwt_levels
            )));
        }
        log_kernel(self.log_size, self.log_sigma)?;
        Ok(())
    }

    pub fn layout(&self) -> DescriptorLayout {
        DescriptorLayout {
            hog: 4 * self.orientations,
            wavelet: 1 + 3 * self.dwt_levels,
        }
    }
}

/// Section sizes of a descriptor: HOG, 4 + 4 moments, wavelet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorLayout {
    pub hog: usize,
    pub wavelet: usize,
}

impl DescriptorLayout {
    pub fn len(&self) -> usize {
        self.hog + 8 + self.wavelet
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn raw_moments_start(&self) -> usize {
        self.hog
    }

    pub fn log_moments_start(&self) -> usize {
        self.hog + 4
    }

    pub fn wavelet_start(&self) -> usize {
        self.hog + 8
    }
}

/// Borrowed view of one block's descriptor.
#[derive(Debug, Clone, Copy)]
pub struct BlockDescriptor<'a> {
    values: &'a [f64],
    layout: DescriptorLayout,
}

impl<'a> BlockDescriptor<'a> {
    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn hog(&self) -> &'a [f64] {
        &self.values[..self.layout.hog]
    }

    pub fn moments_raw(&self) -> &'a [f64] {
        &self.values[self.layout.raw_moments_start()..][..4]
    }

    pub fn moments_log(&self) -> &'a [f64] {
        &self.values[self.layout.log_moments_start()..][..4]
    }

    pub fn wavelet(&self) -> &'a [f64] {
        &self.values[self.layout.wavelet_start()..]
    }
}

/// Descriptors of every block of a slice, row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid {
    pub grid: BlockGrid,
    pub layout: DescriptorLayout,
    data: Vec<f64>,
}

impl DescriptorGrid {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn get(&self, r: usize, c: usize) -> BlockDescriptor<'_> {
        let n = self.dim();
        BlockDescriptor {
            values: &self.data[(r * self.grid.cols + c) * n..][..n],
            layout: self.layout,
        }
    }

    /// Descriptors as rows, in block order.
    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Compute the descriptor of every whole block of `image`.
///
/// The image is cropped to whole blocks before any filtering, so trailing
/// pixels never influence the features.
pub fn assemble_descriptor(image: &GrayImage, params: &FeatureParams) -> Result<DescriptorGrid> {
    params.validate()?;
    let grid = BlockGrid::new(image.width(), image.height(), params.block_size)?;
    let (cw, ch) = grid.covered();
    let plane: Plane = image.plane().crop(cw, ch);
    let layout = params.layout();

    let hog = hog_grid(&plane, &grid, params.orientations)?;
    let kernel = log_kernel(params.log_size, params.log_sigma)?;
    let log = log_filter(&plane, &kernel)?;
    let pyramid = haar_dwt(&plane, params.dwt_levels)?;

    let mut data = Vec::with_capacity(grid.len() * layout.len());
    for (r, c) in grid.blocks() {
        data.extend_from_slice(&hog[(r * grid.cols + c) * layout.hog..][..layout.hog]);
        data.extend(block_moments(&block_view(&plane, &grid, r, c)?)?);
        data.extend(block_moments(&block_view(&log, &grid, r, c)?)?);
        data.extend(wavelet_block_features(&pyramid, params.block_size, r, c)?);
    }
    Ok(DescriptorGrid { grid, layout, data })
}
