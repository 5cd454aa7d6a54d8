//! Leave-one-volume-out evaluation of the full pipeline on phantoms.
//!
//! ```text
//! cargo run --release --example cross_validation -- /tmp/cv-demo 10 5
//! ```

use std::path::{Path, PathBuf};

use myoseg::config::RunConfig;
use myoseg::phantom::{generate_dataset, PhantomSpec};
use myoseg::pipeline::cmd_crossval;

pub fn run(out: &Path, volumes: usize, slices: usize, rounds: usize) -> myoseg::Result<()> {
    let manifest = generate_dataset(&PhantomSpec::default(), 7, volumes, slices, out.join("data"))?;
    let config = RunConfig {
        rounds,
        ..Default::default()
    };
    let cv = cmd_crossval(&manifest, &config, &out.join("cv"))?;
    println!("volume      recall       precision    dice         muscle dice");
    for (v, s) in &cv.report.volumes {
        let md = s.muscle_dice.map_or("-".to_string(), |m| format!("{:.3}±{:.3}", m.mean, m.std));
        println!(
            "{v:<8} {:.3}±{:.3}  {:.3}±{:.3}  {:.3}±{:.3}  {md}",
            s.recall.mean, s.recall.std, s.precision.mean, s.precision.std, s.dice.mean, s.dice.std
        );
    }
    let (r, p, d) = cv.report.overall();
    println!("mean     {r:.3}        {p:.3}        {d:.3}");
    println!("reports in {}", out.join("cv").display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> myoseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args
        .first()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("myoseg-cv"));
    let volumes = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let slices = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(3);
    run(&out, volumes, slices, 500)
}
