mod common;

use common::rng;
use myoseg::atlas::{
    build_atlas, compute_alignment, slice_keypoints, warp_back, warp_mask, Alignment, BoneParams, Point,
};
use myoseg::metrics::{dice, label_dice};
use myoseg::phantom::{generate_volume, PhantomSpec};
use myoseg::{GrayImage, LabelMask};
use rand::Rng;

fn phantom(seed: u64, slices: usize) -> Vec<(GrayImage, LabelMask)> {
    let spec = PhantomSpec {
        seed,
        slices,
        ..Default::default()
    };
    generate_volume(&spec)
        .unwrap()
        .slices
        .into_iter()
        .map(|s| (s.image, s.mask))
        .collect()
}

#[test]
fn single_outlier_never_survives_truncation() {
    let base = phantom(1, 1).remove(0);
    let outlier = phantom(77, 1).remove(0);
    let mut images = vec![base.0.clone(); 8];
    let mut masks = vec![base.1.clone(); 8];
    images.push(outlier.0.clone());
    masks.push(outlier.1.clone());
    let atlas = build_atlas(&masks, &images, 0, &BoneParams::default()).unwrap();
    assert!(atlas.skipped.is_empty());
    let atlas = atlas.atlas;
    assert_eq!(atlas.contributors, 9);

    // expected counts: 8 aligned-by-identity copies plus the warped outlier
    let bone = BoneParams::default();
    let reference = slice_keypoints(&base.0, &base.1, &bone).unwrap();
    let target = slice_keypoints(&outlier.0, &outlier.1, &bone).unwrap();
    let a = compute_alignment(&reference, &target).unwrap();
    let warped = warp_mask(&outlier.1, &a, atlas.width, atlas.height);
    for (&id, m) in &atlas.muscles {
        for p in 0..m.counts.len() {
            let expected = 8 * u32::from(base.1.labels()[p] == id) + u32::from(warped.labels()[p] == id);
            assert_eq!(m.counts[p], expected);
            // peak is 8 or 9, so the level is at least 4.5: only base pixels survive
            assert_eq!(m.region[p], base.1.labels()[p] == id);
        }
    }
}

#[test]
fn warp_round_trip_preserves_phantom_masks() {
    let mut r = rng(5);
    for (_, mask) in phantom(2, 3) {
        for _ in 0..10 {
            let a = Alignment {
                translation: Point::new(r.random_range(-8.0..8.0), r.random_range(-8.0..8.0)),
                rotation: r.random_range(-0.3..0.3),
                scale: r.random_range(0.8..1.2),
                pivot: Point::new(128.0, 140.0),
            };
            let back = warp_back(&warp_mask(&mask, &a, 256, 256), &a, 256, 256).with_palette(mask.palette.clone());
            let d = dice(&back, &mask).unwrap();
            assert!(d >= 0.98, "binary dice {d} for {a:?}");
            for id in mask.muscle_ids() {
                let ld = label_dice(&back, &mask, id).unwrap();
                assert!(ld >= 0.95, "muscle {id} dice {ld} for {a:?}");
            }
        }
    }
}

#[test]
fn labeling_keeps_the_foreground_and_recovers_muscles() {
    let mut images = Vec::new();
    let mut masks = Vec::new();
    for seed in 30..36 {
        for (i, m) in phantom(seed, 2) {
            images.push(i);
            masks.push(m);
        }
    }
    let atlas = build_atlas(&masks, &images, 3, &BoneParams::default()).unwrap().atlas;
    let mut total = 0.0;
    let mut n = 0.0;
    for (image, truth) in phantom(99, 3) {
        let binary = LabelMask::from_binary(256, 256, &truth.foreground()).unwrap();
        let labeled = atlas
            .label_segmentation(&binary, &image, &BoneParams::default())
            .unwrap();
        assert_eq!(labeled.foreground(), binary.foreground());
        for id in truth.muscle_ids() {
            total += label_dice(&labeled, &truth, id).unwrap();
            n += 1.0;
        }
        // a ragged foreground keeps its support too
        let ragged: Vec<bool> = truth
            .foreground()
            .iter()
            .enumerate()
            .map(|(p, &f)| f && (p / 256 + p % 256) % 7 != 0)
            .collect();
        let ragged = LabelMask::from_binary(256, 256, &ragged).unwrap();
        let labeled = atlas.label_segmentation(&ragged, &image, &BoneParams::default()).unwrap();
        assert_eq!(labeled.foreground(), ragged.foreground());
    }
    assert!(total / n >= 0.8, "mean muscle dice {}", total / n);
}
