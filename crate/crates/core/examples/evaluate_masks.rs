//! Overlap metrics and per-volume summaries for hand-made masks.
//!
//! ```text
//! cargo run --example evaluate_masks
//! ```

use myoseg::metrics::{confusion, EvalReport, SliceScore};
use myoseg::LabelMask;

fn disk(cx: f64, cy: f64, r: f64) -> LabelMask {
    LabelMask::from_fn(64, 64, |x, y| u8::from((x as f64 - cx).hypot(y as f64 - cy) <= r))
}

pub fn run() -> myoseg::Result<()> {
    let truth = disk(32.0, 32.0, 20.0);
    let mut scores = Vec::new();
    for (i, (dx, r)) in [(0.0, 20.0), (3.0, 20.0), (0.0, 16.0), (6.0, 24.0)].into_iter().enumerate() {
        let pred = disk(32.0 + dx, 32.0, r);
        let c = confusion(&pred, &truth)?;
        println!("shift {dx} radius {r}: tp {} fp {} fn {}  dice {:.3}", c.tp, c.fp, c.fn_, c.dice());
        let volume = if i < 2 { "a" } else { "b" };
        scores.push(SliceScore::new(volume, i as u32, &c));
    }
    let report = EvalReport::new(scores, Vec::new());
    print!("{}", report.summary_csv());
    Ok(())
}

#[allow(dead_code)]
fn main() -> myoseg::Result<()> {
    run()
}
