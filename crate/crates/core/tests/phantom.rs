mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use myoseg::atlas::{bone_centroid, BoneParams};
use myoseg::boost::{train_adaboost, BlockOrigin, TrainingSet};
use myoseg::features::{assemble_descriptor, FeatureParams};
use myoseg::phantom::{generate_dataset, generate_volume, PhantomSpec, PoseJitter, Striation, Tissue};

fn still_pose() -> PoseJitter {
    PoseJitter {
        rotation: 0.0,
        scale: 0.0,
        shift: 0.0,
        compartment_angle: 0.0,
    }
}

#[test]
fn muscle_means_sit_within_sampling_error() {
    let spec = PhantomSpec {
        seed: 3,
        slices: 3,
        striation: Striation {
            amplitude: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let v = generate_volume(&spec).unwrap();
    let sigma = spec.noise.muscle;
    for s in &v.slices {
        for k in 1..=spec.muscles as u8 {
            let px: Vec<f64> = s
                .mask
                .labels()
                .iter()
                .zip(s.image.data())
                .filter(|(l, _)| **l == k)
                .map(|(_, &x)| x)
                .collect();
            let n = px.len() as f64;
            let mean = px.iter().sum::<f64>() / n;
            let target = v.params.muscle_means[k as usize - 1];
            let [lo, hi] = spec.bands.muscle;
            assert!((lo..=hi).contains(&target));
            // 16-bit quantization adds at most half a step
            let tol = 3.0 * sigma / n.sqrt() + 0.5 / 65535.0;
            assert!((mean - target).abs() <= tol, "slice {} muscle {k}: {mean} vs {target}", s.index);
        }
    }
}

#[test]
fn bone_is_found_where_the_spec_puts_it() {
    let spec = PhantomSpec {
        seed: 21,
        slices: 3,
        pose: still_pose(),
        slice_jitter: 0.0,
        ..Default::default()
    };
    for s in generate_volume(&spec).unwrap().slices {
        let c = bone_centroid(&s.image, &BoneParams::default()).unwrap();
        let [x, y] = spec.bone_center;
        assert!((c.x - x).hypot(c.y - y) <= 2.0, "{c:?}");
    }
    // with pose and jitter the generator reports where it put the bone
    for seed in 0..5 {
        let spec = PhantomSpec {
            seed,
            slices: 2,
            ..Default::default()
        };
        for s in generate_volume(&spec).unwrap().slices {
            let c = bone_centroid(&s.image, &BoneParams::default()).unwrap();
            assert!((c - s.bone_center).norm() <= 2.0);
        }
    }
}

#[test]
fn consecutive_slices_change_smoothly() {
    let spec = PhantomSpec {
        seed: 5,
        slices: 5,
        ..Default::default()
    };
    let v = generate_volume(&spec).unwrap();
    for w in v.slices.windows(2) {
        assert_eq!(w[1].index, w[0].index + 1);
        assert!((w[1].bone_center - w[0].bone_center).norm() <= spec.slice_jitter);
        let changed = w[0]
            .mask
            .foreground()
            .iter()
            .zip(w[1].mask.foreground())
            .filter(|(a, b)| **a != *b)
            .count();
        // only a thin band along the outline may change
        assert!(changed < w[0].mask.foreground_count() / 10, "{changed}");
    }
}

#[test]
fn compartments_are_disjoint_and_exclusive_of_other_tissue() {
    for seed in [0, 1, 2] {
        let spec = PhantomSpec {
            seed,
            slices: 2,
            ..Default::default()
        };
        for s in generate_volume(&spec).unwrap().slices {
            let mut per_label: BTreeMap<u8, BTreeSet<Tissue>> = BTreeMap::new();
            for (t, &l) in s.tissue.iter().zip(s.mask.labels()) {
                per_label.entry(l).or_default().insert(*t);
            }
            for (l, tissues) in &per_label {
                if *l == 0 {
                    assert!(!tissues.contains(&Tissue::Muscle));
                } else {
                    assert_eq!(tissues, &[Tissue::Muscle].into_iter().collect());
                }
            }
            assert_eq!(per_label.len(), spec.muscles + 1);
        }
    }
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn dataset_is_complete_and_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let spec = PhantomSpec::default();
    let ma = generate_dataset(&spec, 7, 10, 5, a.path()).unwrap();
    let mb = generate_dataset(&spec, 7, 10, 5, b.path()).unwrap();
    assert_eq!(ma.volumes, mb.volumes);
    assert_eq!(ma.volumes.len(), 10);
    assert_eq!(ma.slices().count(), 50);
    for s in ma.slices() {
        assert!(ma.resolve(&s.entry.image).exists());
        assert!(ma.resolve(s.entry.mask.as_ref().unwrap()).exists());
    }
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    assert_eq!(ta, tb);
    // images of different volumes never coincide
    let images: BTreeSet<&Vec<u8>> = ta
        .iter()
        .filter(|(k, _)| k.ends_with(".png") && !k.contains("mask"))
        .map(|(_, v)| v)
        .collect();
    assert_eq!(images.len(), 50);
    let loaded = ma.load_all().unwrap();
    assert!(loaded.iter().all(|s| s.mask.as_ref().unwrap().palette.len() == 6));
}

#[test]
fn dataset_rejects_empty_counts_and_unwritable_dirs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(generate_dataset(&PhantomSpec::default(), 1, 0, 5, dir.path()).is_err());
    let file = dir.path().join("file");
    fs::write(&file, "x").unwrap();
    assert!(generate_dataset(&PhantomSpec::default(), 1, 1, 1, file.join("sub")).is_err());
}

/// Blocks whose pixels are at least `purity` of a single tissue.
fn pure_blocks(spec: &PhantomSpec, purity: f64) -> TrainingSet {
    let params = FeatureParams::default();
    let mut set = TrainingSet::new(params.layout().len());
    let v = generate_volume(spec).unwrap();
    for s in &v.slices {
        let d = assemble_descriptor(&s.image, &params).unwrap();
        let w = s.image.width();
        for (r, c) in d.grid.blocks() {
            let (mut muscle, mut fat) = (0usize, 0usize);
            for y in r * 16..(r + 1) * 16 {
                for x in c * 16..(c + 1) * 16 {
                    match s.tissue[y * w + x] {
                        Tissue::Muscle => muscle += 1,
                        Tissue::Fat => fat += 1,
                        _ => {}
                    }
                }
            }
            let origin = BlockOrigin {
                volume: String::new(),
                slice: s.index,
                row: r,
                col: c,
            };
            if muscle as f64 >= purity * 256.0 {
                set.push(d.get(r, c).values(), 1, origin);
            } else if fat as f64 >= purity * 256.0 {
                set.push(d.get(r, c).values(), -1, origin);
            }
        }
    }
    set
}

/// Lowest training error of any threshold on one feature.
fn best_single_feature_error(set: &TrainingSet, f: usize) -> f64 {
    let mut xs: Vec<(f64, i8)> = (0..set.len()).map(|i| (set.sample(i)[f], set.labels[i])).collect();
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = xs.len();
    let pos = xs.iter().filter(|x| x.1 > 0).count();
    let mut best = n.min(pos).min(n - pos);
    let (mut bp, mut bn) = (0usize, 0usize);
    for k in 0..n {
        if xs[k].1 > 0 {
            bp += 1;
        } else {
            bn += 1;
        }
        if k + 1 < n && xs[k + 1].0 == xs[k].0 {
            continue;
        }
        // above the split predicted positive, or negative
        best = best.min(bp + (n - pos - bn)).min((pos - bp) + bn);
    }
    best as f64 / n as f64
}

#[test]
fn overlapping_bands_defeat_the_mean_feature_but_not_texture() {
    let mut spec = PhantomSpec {
        seed: 8,
        slices: 5,
        ..Default::default()
    };
    spec.bands.muscle = [0.55, 0.65];
    spec.bands.fat = [0.55, 0.70];
    spec.noise.fat = 0.03;
    let mut set = pure_blocks(&spec, 0.6);
    for seed in 9..14 {
        let other = pure_blocks(&PhantomSpec { seed, ..spec.clone() }, 0.6);
        for i in 0..other.len() {
            set.push(other.sample(i), other.labels[i], other.provenance[i].clone());
        }
    }
    assert!(set.labels.contains(&1) && set.labels.contains(&-1));
    let mean_feature = FeatureParams::default().layout().raw_moments_start();
    let mean_only = best_single_feature_error(&set, mean_feature);
    assert!(mean_only > 0.0, "raw mean alone separates muscle from fat");
    let boosted = train_adaboost(&set, 50).unwrap();
    let err = boosted.history.last().unwrap().train_err;
    assert!(err < mean_only, "texture features add nothing: {err} vs {mean_only}");
}
