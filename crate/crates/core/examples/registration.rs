//! Keypoints of two phantom slices and the alignment between them.
//!
//! ```text
//! cargo run --example registration
//! ```

use myoseg::atlas::{compute_alignment, slice_keypoints, warp_back, warp_mask, BoneParams};
use myoseg::metrics::dice;
use myoseg::phantom::{generate_volume, PhantomSpec};

pub fn run() -> myoseg::Result<()> {
    let bone = BoneParams::default();
    let slice = |seed| -> myoseg::Result<_> {
        let spec = PhantomSpec {
            seed,
            slices: 1,
            ..Default::default()
        };
        Ok(generate_volume(&spec)?.slices.remove(0))
    };
    let (reference, target) = (slice(1)?, slice(2)?);
    let kr = slice_keypoints(&reference.image, &reference.mask, &bone)?;
    let kt = slice_keypoints(&target.image, &target.mask, &bone)?;
    println!("reference bone {:.1?} distal {:.1?}", kr.bone_centroid, kr.distal_point);
    println!("target    bone {:.1?} distal {:.1?}", kt.bone_centroid, kt.distal_point);

    let a = compute_alignment(&kr, &kt)?;
    println!(
        "translation ({:.2}, {:.2})  rotation {:.4} rad  scale {:.4}",
        a.translation.x, a.translation.y, a.rotation, a.scale
    );
    let (w, h) = (reference.mask.width(), reference.mask.height());
    let aligned = warp_mask(&target.mask, &a, w, h);
    println!("overlap with reference: before {:.3}, after {:.3}", dice(&target.mask, &reference.mask)?, dice(&aligned, &reference.mask)?);
    let back = warp_back(&aligned, &a, w, h);
    println!("round trip dice {:.4}", dice(&back, &target.mask)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> myoseg::Result<()> {
    run()
}
