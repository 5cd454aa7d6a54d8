mod common;

use common::{random_image, rng};
use myoseg::features::{assemble_descriptor, FeatureParams};
use myoseg::GrayImage;

fn swap_blocks(img: &GrayImage, a: (usize, usize), b: (usize, usize)) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (r, c) = (y / 16, x / 16);
        let (dy, dx) = (y % 16, x % 16);
        let src = if (r, c) == a {
            b
        } else if (r, c) == b {
            a
        } else {
            return img.get(x, y);
        };
        img.get(src.1 * 16 + dx, src.0 * 16 + dy)
    })
    .unwrap()
}

fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

#[test]
fn swapping_blocks_swaps_their_local_features_only() {
    let params = FeatureParams::default();
    let l = params.layout();
    for seed in 0..5 {
        let img = random_image(&mut rng(seed), 96, 96);
        let (a, b) = ((1, 1), (4, 3));
        let swapped = swap_blocks(&img, a, b);
        let before = assemble_descriptor(&img, &params).unwrap();
        let after = assemble_descriptor(&swapped, &params).unwrap();
        let raw = l.raw_moments_start()..l.log_moments_start();
        let wav = l.wavelet_start()..l.len();
        for (x, y) in [(a, b), (b, a)] {
            let (old, new) = (before.get(x.0, x.1).values(), after.get(y.0, y.1).values());
            assert_eq!(old[raw.clone()], new[raw.clone()]);
            assert_eq!(old[wav.clone()], new[wav.clone()]);
        }
        for (r, c) in before.grid.blocks() {
            let p = (r, c);
            if p == a || p == b {
                continue;
            }
            let (old, new) = (before.get(r, c).values(), after.get(r, c).values());
            assert_eq!(old[raw.clone()], new[raw.clone()]);
            assert_eq!(old[wav.clone()], new[wav.clone()]);
            // gradients reach one pixel into the next cell and the 2x2
            // normalization windows one cell further
            if chebyshev(p, a) >= 3 && chebyshev(p, b) >= 3 {
                assert_eq!(old, new, "block {p:?} changed");
            }
        }
    }
}
