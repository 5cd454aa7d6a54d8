use crate::error::{Error, Result};
use crate::imgio::LabelMask;
use crate::preproc::BlockGrid;

/// Offsets of a digital disk: all `(dx, dy)` with `dx² + dy² <= r²`.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Erode every label's support independently with a disk.
///
/// A pixel keeps its label only if the whole disk around it lies inside the
/// image and carries the same label; vacated pixels become background.
pub fn erode_labels(mask: &LabelMask, radius: usize) -> LabelMask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disk_offsets(radius);
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let labels = mask.labels();
    let mut out = LabelMask::background(mask.width(), mask.height()).with_palette(mask.palette.clone());
    for y in 0..h {
        for x in 0..w {
            let l = labels[(y * w + x) as usize];
            if l == 0 {
                continue;
            }
            let keep = offsets.iter().all(|&(dx, dy)| {
                let (sx, sy) = (x + dx, y + dy);
                sx >= 0 && sy >= 0 && sx < w && sy < h && labels[(sy * w + sx) as usize] == l
            });
            if keep {
                out.set(x as usize, y as usize, l);
            }
        }
    }
    out
}

/// Block label: +1 when strictly more than half of the block's pixels are
/// muscle (any label > 0), otherwise −1. Ties go negative.
pub fn derive_block_labels(mask: &LabelMask, grid: &BlockGrid) -> Result<Vec<i8>> {
    let (cw, ch) = grid.covered();
    if mask.width() < cw || mask.height() < ch {
        return Err(Error::InvalidInput(format!(
            "{}x{} mask does not cover the {}x{} block grid",
            mask.width(),
            mask.height(),
            grid.rows,
            grid.cols
        )));
    }
    let b = grid.block_size;
    let half = grid.pixels_per_block() / 2;
    Ok(grid
        .blocks()
        .map(|(r, c)| {
            let mut count = 0;
            for y in r * b..(r + 1) * b {
                count += mask.labels()[y * mask.width() + c * b..][..b]
                    .iter()
                    .filter(|&&l| l > 0)
                    .count();
            }
            if count > half {
                1
            } else {
                -1
            }
        })
        .collect())
}

/// Paint every +1 block's footprint as label 1 on a `width`×`height` canvas.
pub fn blocks_to_mask(labels: &[i8], grid: &BlockGrid, width: usize, height: usize) -> Result<LabelMask> {
    let (cw, ch) = grid.covered();
    if labels.len() != grid.len() || cw > width || ch > height {
        return Err(Error::InvalidInput(format!(
            "{} block labels for a {}x{} grid on a {width}x{height} canvas",
            labels.len(),
            grid.rows,
            grid.cols
        )));
    }
    let b = grid.block_size;
    let mut mask = LabelMask::background(width, height);
    for ((r, c), &l) in grid.blocks().zip(labels) {
        if l > 0 {
            for y in r * b..(r + 1) * b {
                for x in c * b..(c + 1) * b {
                    mask.set(x, y, 1);
                }
            }
        }
    }
    Ok(mask)
}
