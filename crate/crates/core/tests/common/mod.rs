#![allow(dead_code)]

use myoseg::boost::{Stump, TrainingSet};
use myoseg::features::{assemble_descriptor, FeatureParams};
use myoseg::phantom::{generate_volume, PhantomSpec};
use myoseg::pipeline::{training_set, SliceData};
use myoseg::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |_, _| rng.random::<f64>()).unwrap()
}

/// Phantom slices with descriptors, volume `v` seeded `base ^ v`.
pub fn phantom_slices(base: u64, volumes: usize, slices: usize) -> Vec<SliceData> {
    let params = FeatureParams::default();
    let mut out = Vec::new();
    for v in 0..volumes {
        let spec = PhantomSpec {
            seed: base ^ v as u64,
            slices,
            ..Default::default()
        };
        for s in generate_volume(&spec).unwrap().slices {
            out.push(SliceData {
                volume: format!("vol{:02}", v + 1),
                index: s.index,
                stem: format!("slice_{:02}", s.index),
                descriptors: assemble_descriptor(&s.image, &params).unwrap(),
                image: s.image,
                mask: Some(s.mask),
            });
        }
    }
    out
}

pub fn phantom_training_set(base: u64, volumes: usize, slices: usize) -> TrainingSet {
    training_set(&phantom_slices(base, volumes, slices), 2).unwrap()
}

/// Exhaustive stump search written independently of the library: every
/// feature, every threshold between distinct sorted values plus one below
/// and one above all values, both polarities, error summed sample by
/// sample. Returns the first stump (feature, threshold, +1 before −1)
/// whose error is within 1e-12 of the minimum, with that error.
pub fn brute_force_stump(set: &TrainingSet, weights: &[f64]) -> (Stump, f64) {
    let n = set.len();
    let mut candidates: Vec<(Stump, f64)> = Vec::new();
    for f in 0..set.dim {
        let mut values: Vec<f64> = (0..n).map(|i| set.sample(i)[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut thresholds = vec![values[0] - 1.0];
        for w in values.windows(2) {
            thresholds.push(0.5 * (w[0] + w[1]));
        }
        thresholds.push(values[values.len() - 1] + 1.0);
        for &t in &thresholds {
            for pol in [1i8, -1] {
                let mut err = 0.0;
                for i in 0..n {
                    let h = if set.sample(i)[f] > t { pol } else { -pol };
                    if h != set.labels[i] {
                        err += weights[i];
                    }
                }
                candidates.push((
                    Stump {
                        feature: f,
                        threshold: t,
                        polarity: pol,
                    },
                    err,
                ));
            }
        }
    }
    let min = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    candidates.into_iter().find(|c| c.1 <= min + 1e-12).unwrap()
}

/// True when two stumps on the same feature and polarity split the
/// training samples identically.
pub fn same_partition(set: &TrainingSet, a: &Stump, b: &Stump) -> bool {
    a.feature == b.feature
        && a.polarity == b.polarity
        && (0..set.len()).all(|i| {
            let x = set.sample(i)[a.feature];
            (x > a.threshold) == (x > b.threshold)
        })
}
