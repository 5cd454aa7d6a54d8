//! Train the block classifier on a few phantom volumes and segment a
//! slice from a volume it has not seen.
//!
//! ```text
//! cargo run --example train_classifier -- 200
//! ```

use myoseg::boost::{blocks_to_mask, derive_block_labels, erode_labels, train_adaboost, BlockOrigin, TrainingSet};
use myoseg::features::{assemble_descriptor, FeatureParams};
use myoseg::metrics::confusion;
use myoseg::phantom::{generate_volume, PhantomSpec};

pub fn run(rounds: usize) -> myoseg::Result<()> {
    let params = FeatureParams::default();
    let mut set = TrainingSet::new(params.layout().len());
    for seed in 0..3 {
        let spec = PhantomSpec {
            seed,
            slices: 2,
            ..Default::default()
        };
        for s in generate_volume(&spec)?.slices {
            let d = assemble_descriptor(&s.image, &params)?;
            let labels = derive_block_labels(&erode_labels(&s.mask, 2), &d.grid)?;
            for ((r, c), (x, y)) in d.grid.blocks().zip(d.rows().zip(labels)) {
                let origin = BlockOrigin {
                    volume: format!("seed{seed}"),
                    slice: s.index,
                    row: r,
                    col: c,
                };
                set.push(x, y, origin);
            }
        }
    }
    let outcome = train_adaboost(&set, rounds)?;
    for h in outcome.history.iter().filter(|h| h.round == 1 || h.round % 50 == 0) {
        println!("round {:>3}  eps {:.4}  train err {:.4}  exp loss {:.4}", h.round, h.eps, h.train_err, h.exp_loss);
    }

    let test = generate_volume(&PhantomSpec {
        seed: 42,
        slices: 1,
        ..Default::default()
    })?
    .slices
    .remove(0);
    let d = assemble_descriptor(&test.image, &params)?;
    let (_, labels) = outcome.classifier.predict_blocks(d.as_flat())?;
    let pred = blocks_to_mask(&labels, &d.grid, test.image.width(), test.image.height())?;
    let c = confusion(&pred, &test.mask)?;
    println!("held-out slice: recall {:.3} precision {:.3} dice {:.3}", c.recall(), c.precision(), c.dice());
    Ok(())
}

#[allow(dead_code)]
fn main() -> myoseg::Result<()> {
    let rounds = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(100);
    run(rounds)
}
