//! Build a muscle atlas from phantom slices and use it to split a binary
//! muscle mask into individual muscles.
//!
//! ```text
//! cargo run --example atlas_labeling -- /tmp/atlas-demo
//! ```

use std::path::{Path, PathBuf};

use myoseg::atlas::{build_atlas, BoneParams, MuscleAtlas};
use myoseg::imgio::save_overlay;
use myoseg::metrics::label_dice;
use myoseg::phantom::{generate_volume, PhantomSpec};
use myoseg::LabelMask;

pub fn run(out: &Path) -> myoseg::Result<()> {
    let bone = BoneParams::default();
    let (mut images, mut masks) = (Vec::new(), Vec::new());
    for seed in 0..4 {
        let spec = PhantomSpec {
            seed,
            slices: 3,
            ..Default::default()
        };
        for s in generate_volume(&spec)?.slices {
            images.push(s.image);
            masks.push(s.mask);
        }
    }
    let build = build_atlas(&masks, &images, 0, &bone)?;
    build.atlas.save(out.join("atlas"))?;
    let atlas = MuscleAtlas::load(out.join("atlas"))?;
    for (id, m) in &atlas.muscles {
        let area = m.region.iter().filter(|&&b| b).count();
        println!("muscle {id} peak {} region {area} px", m.peak);
    }

    let test = generate_volume(&PhantomSpec {
        seed: 50,
        slices: 1,
        ..Default::default()
    })?
    .slices
    .remove(0);
    let binary = LabelMask::from_binary(test.mask.width(), test.mask.height(), &test.mask.foreground())?;
    let labeled = atlas.label_segmentation(&binary, &test.image, &bone)?;
    for id in test.mask.muscle_ids() {
        let name = &test.mask.palette[&id];
        println!("{name:<20} dice {:.3}", label_dice(&labeled, &test.mask, id)?);
    }
    save_overlay(&test.image, &labeled, out.join("labeled.png"))?;
    println!("overlay: {}", out.join("labeled.png").display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> myoseg::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("myoseg-atlas"));
    run(&out)
}
