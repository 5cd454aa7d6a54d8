use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::imgio::Plane;

/// Horizontal, vertical and diagonal detail subbands of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailBands {
    pub horizontal: Plane,
    pub vertical: Plane,
    pub diagonal: Plane,
}

/// Multi-level orthonormal Haar decomposition.
///
/// `details[0]` is the finest level; `approx` is the low-pass band left after
/// the last level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    pub details: Vec<DetailBands>,
    pub approx: Plane,
}

impl WaveletPyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// All coefficients, approximation first.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.approx.data().iter().copied().chain(self.details.iter().flat_map(|d| {
            d.horizontal
                .data()
                .iter()
                .chain(d.vertical.data())
                .chain(d.diagonal.data())
                .copied()
        }))
    }
}

fn analyze(a: &Plane) -> (Plane, DetailBands) {
    let (w, h) = (a.width() / 2, a.height() / 2);
    let mut ll = Plane::zeros(w, h);
    let mut hb = Plane::zeros(w, h);
    let mut vb = Plane::zeros(w, h);
    let mut db = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let p00 = a.get(2 * x, 2 * y);
            let p01 = a.get(2 * x + 1, 2 * y);
            let p10 = a.get(2 * x, 2 * y + 1);
            let p11 = a.get(2 * x + 1, 2 * y + 1);
            // rows first, then columns
            let (lt, ht) = ((p00 + p01) * FRAC_1_SQRT_2, (p00 - p01) * FRAC_1_SQRT_2);
            let (lb, hbot) = ((p10 + p11) * FRAC_1_SQRT_2, (p10 - p11) * FRAC_1_SQRT_2);
            ll.set(x, y, (lt + lb) * FRAC_1_SQRT_2);
            hb.set(x, y, (lt - lb) * FRAC_1_SQRT_2);
            vb.set(x, y, (ht + hbot) * FRAC_1_SQRT_2);
            db.set(x, y, (ht - hbot) * FRAC_1_SQRT_2);
        }
    }
    (
        ll,
        DetailBands {
            horizontal: hb,
            vertical: vb,
            diagonal: db,
        },
    )
}

fn synthesize(ll: &Plane, d: &DetailBands) -> Plane {
    let (w, h) = (ll.width(), ll.height());
    let mut out = Plane::zeros(2 * w, 2 * h);
    for y in 0..h {
        for x in 0..w {
            let a = ll.get(x, y);
            let hh = d.horizontal.get(x, y);
            let v = d.vertical.get(x, y);
            let dd = d.diagonal.get(x, y);
            let (lt, lb) = ((a + hh) * FRAC_1_SQRT_2, (a - hh) * FRAC_1_SQRT_2);
            let (ht, hbot) = ((v + dd) * FRAC_1_SQRT_2, (v - dd) * FRAC_1_SQRT_2);
            out.set(2 * x, 2 * y, (lt + ht) * FRAC_1_SQRT_2);
            out.set(2 * x + 1, 2 * y, (lt - ht) * FRAC_1_SQRT_2);
            out.set(2 * x, 2 * y + 1, (lb + hbot) * FRAC_1_SQRT_2);
            out.set(2 * x + 1, 2 * y + 1, (lb - hbot) * FRAC_1_SQRT_2);
        }
    }
    out
}

/// Separable orthonormal Haar analysis, `levels` times on the running
/// low-pass band. Both dimensions must be divisible by `2^levels`.
pub fn haar_dwt(image: &Plane, levels: usize) -> Result<WaveletPyramid> {
    let factor = 1usize << levels;
    if levels == 0 || !image.width().is_multiple_of(factor) || !image.height().is_multiple_of(factor) {
        return Err(Error::InvalidInput(format!(
            "{}x{} image is not divisible by 2^{levels}",
            image.width(),
            image.height()
        )));
    }
    let mut details = Vec::with_capacity(levels);
    let mut approx = image.clone();
    for _ in 0..levels {
        let (ll, d) = analyze(&approx);
        details.push(d);
        approx = ll;
    }
    Ok(WaveletPyramid { details, approx })
}

/// Exact inverse of [`haar_dwt`].
pub fn haar_idwt(pyramid: &WaveletPyramid) -> Plane {
    pyramid
        .details
        .iter()
        .rev()
        .fold(pyramid.approx.clone(), |ll, d| synthesize(&ll, d))
}

fn mean_abs(band: &Plane, x0: usize, y0: usize, side: usize) -> Result<f64> {
    if x0 + side > band.width() || y0 + side > band.height() {
        return Err(Error::InvalidInput(format!(
            "footprint at ({x0}, {y0}) of side {side} exceeds {}x{} subband",
            band.width(),
            band.height()
        )));
    }
    let mut acc = 0.0;
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            acc += band.get(x, y).abs();
        }
    }
    Ok(acc / (side * side) as f64)
}

/// Mean absolute coefficient of each subband inside the footprint of block
/// `(r, c)`, ordered `[LL_L, H1, V1, D1, ..., HL, VL, DL]`.
pub fn wavelet_block_features(
    pyramid: &WaveletPyramid,
    block_size: usize,
    r: usize,
    c: usize,
) -> Result<Vec<f64>> {
    let levels = pyramid.levels();
    if !block_size.is_multiple_of(1 << levels) {
        return Err(Error::InvalidInput(format!(
            "block size {block_size} not divisible by 2^{levels}"
        )));
    }
    let side_at = |level: usize| block_size >> level;
    let mut out = Vec::with_capacity(1 + 3 * levels);
    let s = side_at(levels);
    out.push(mean_abs(&pyramid.approx, c * s, r * s, s)?);
    for (i, d) in pyramid.details.iter().enumerate() {
        let s = side_at(i + 1);
        for band in [&d.horizontal, &d.vertical, &d.diagonal] {
            out.push(mean_abs(band, c * s, r * s, s)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(seed: u64, w: usize, h: usize) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    #[test]
    fn constant_image() {
        let img = Plane::from_fn(32, 16, |_, _| 0.3);
        let p = haar_dwt(&img, 3).unwrap();
        assert_eq!((p.approx.width(), p.approx.height()), (4, 2));
        assert!(p.approx.data().iter().all(|v| (v - 2.4).abs() < 1e-12));
        for d in &p.details {
            for band in [&d.horizontal, &d.vertical, &d.diagonal] {
                assert!(band.data().iter().all(|v| v.abs() < 1e-15));
            }
        }
    }

    #[test]
    fn subband_sizes_and_count() {
        let p = haar_dwt(&random_plane(1, 64, 32), 3).unwrap();
        for (l, d) in p.details.iter().enumerate() {
            assert_eq!(d.horizontal.width(), 64 >> (l + 1));
            assert_eq!(d.diagonal.height(), 32 >> (l + 1));
        }
        assert_eq!(p.coefficients().count(), 64 * 32);
    }

    #[test]
    fn roundtrip_and_energy() {
        for seed in 0..5 {
            let img = random_plane(seed, 64, 64);
            let p = haar_dwt(&img, 3).unwrap();
            let back = haar_idwt(&p);
            let err = img
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-9);
            let e_img: f64 = img.data().iter().map(|v| v * v).sum();
            let e_coef: f64 = p.coefficients().map(|v| v * v).sum();
            assert!(((e_img - e_coef) / e_img).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_indivisible_dims() {
        assert!(haar_dwt(&Plane::zeros(20, 16), 3).is_err());
        assert!(haar_dwt(&Plane::zeros(16, 12), 3).is_err());
    }

    #[test]
    fn constant_block_features() {
        let p = haar_dwt(&Plane::from_fn(32, 32, |_, _| 0.25), 3).unwrap();
        let f = wavelet_block_features(&p, 16, 1, 0).unwrap();
        assert_eq!(f.len(), 10);
        assert!((f[0] - 2.0).abs() < 1e-12);
        assert!(f[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn matches_index_arithmetic_oracle() {
        let img = random_plane(4, 48, 32);
        let p = haar_dwt(&img, 3).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                let got = wavelet_block_features(&p, 16, r, c).unwrap();
                let mut want = Vec::new();
                // approximation band: 2x2 footprint starting at (2c, 2r)
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += p.approx.get(2 * c + k % 2, 2 * r + k / 2).abs();
                }
                want.push(acc / 4.0);
                for (l, d) in p.details.iter().enumerate() {
                    let side = 8 >> l;
                    for band in [&d.horizontal, &d.vertical, &d.diagonal] {
                        let mut acc = 0.0;
                        for k in 0..side * side {
                            acc += band.get(c * side + k % side, r * side + k / side).abs();
                        }
                        want.push(acc / (side * side) as f64);
                    }
                }
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
        assert!(wavelet_block_features(&p, 16, 2, 0).is_err());
    }

    #[test]
    fn detail_locality() {
        // checkerboard texture confined to block (1, 1) of a 48x48 flat image
        let img = Plane::from_fn(48, 48, |x, y| {
            if (16..32).contains(&x) && (16..32).contains(&y) {
                0.5 + 0.25 * (((x + y) % 2) as f64 - 0.5)
            } else {
                0.5
            }
        });
        let p = haar_dwt(&img, 3).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let f = wavelet_block_features(&p, 16, r, c).unwrap();
                let detail: f64 = f[1..].iter().sum();
                if (r, c) == (1, 1) {
                    assert!(detail > 0.1);
                } else {
                    assert!(detail < 1e-12);
                }
            }
        }
    }
}
