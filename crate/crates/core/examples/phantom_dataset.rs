//! Generate a small synthetic dataset and print what was written.
//!
//! ```text
//! cargo run --example phantom_dataset -- /tmp/phantoms
//! ```

use std::path::{Path, PathBuf};

use myoseg::phantom::{generate_dataset, PhantomSpec};

pub fn run(out: &Path) -> myoseg::Result<()> {
    let spec = PhantomSpec::default();
    let manifest = generate_dataset(&spec, 7, 3, 2, out)?;
    for s in manifest.slices() {
        println!("{} slice {:>2}  {}", s.volume, s.entry.index, s.entry.image.display());
    }
    let first = manifest.load_all()?.remove(0);
    let mask = first.mask.expect("phantoms carry ground truth");
    for (id, name) in &mask.palette {
        let px = mask.labels().iter().filter(|&&l| l == *id).count();
        println!("label {id} {name:<20} {px:>6} px");
    }
    println!("manifest: {}", out.join("manifest.json").display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> myoseg::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("myoseg-phantoms"));
    run(&out)
}
