//! Block descriptors of one phantom slice, split into their sections.
//!
//! ```text
//! cargo run --example texture_features
//! ```

use myoseg::features::{assemble_descriptor, FeatureParams};
use myoseg::phantom::{generate_volume, PhantomSpec};

pub fn run() -> myoseg::Result<()> {
    let slice = generate_volume(&PhantomSpec::default())?.slices.remove(0);
    let params = FeatureParams::default();
    let grid = assemble_descriptor(&slice.image, &params)?;
    println!("{} x {} blocks, {} values each", grid.grid.rows, grid.grid.cols, grid.dim());

    // one block in the air, one inside a muscle
    for (r, c) in [(0, 0), (8, 6)] {
        let d = grid.get(r, c);
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("block ({r}, {c})");
        println!("  hog, first cell  {}", fmt(&d.hog()[..9]));
        println!("  moments          {}", fmt(d.moments_raw()));
        println!("  LoG moments      {}", fmt(d.moments_log()));
        println!("  wavelet          {}", fmt(d.wavelet()));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> myoseg::Result<()> {
    run()
}
