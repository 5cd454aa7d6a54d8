use crate::error::{Error, Result};

/// Variance at or below this is treated as a flat block.
pub const FLAT_VARIANCE: f64 = 1e-12;

/// Population mean, variance, skewness and (non-excess) kurtosis.
///
/// Flat blocks report zero skewness and kurtosis.
pub fn block_moments(tile: &[f64]) -> Result<[f64; 4]> {
    if tile.is_empty() {
        return Err(Error::InvalidInput("empty tile".into()));
    }
    if tile.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in tile".into()));
    }
    let n = tile.len() as f64;
    let mean = tile.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in tile {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let var = m2 / n;
    if var <= FLAT_VARIANCE {
        return Ok([mean, var, 0.0, 0.0]);
    }
    let sd = var.sqrt();
    Ok([mean, var, (m3 / n) / (var * sd), (m4 / n) / (var * var)])
}
