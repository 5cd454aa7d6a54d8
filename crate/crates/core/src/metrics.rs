//! Overlap metrics and per-volume aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imgio::LabelMask;

/// Leave-one-volume-out driver; lives with the other pipeline stages.
pub use crate::pipeline::{cross_validate, CrossValidation};

/// Pixel confusion counts of a binary prediction against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_, self.tp + self.fp == 0)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp, self.tp + self.fn_ == 0)
    }

    /// `2·tp / (2·tp + fp + fn)`.
    pub fn dice(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_, true)
    }
}

/// `num / den`, or 1/0 for an empty denominator depending on whether the
/// complementary set is empty too.
fn ratio(num: u64, den: u64, other_empty: bool) -> f64 {
    if den == 0 {
        if other_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

/// Pixelwise counts over two foreground indicator slices.
pub fn confusion_from(pred: &[bool], truth: &[bool]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "prediction has {} pixels, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Confusion of two masks where any label > 0 counts as muscle.
pub fn confusion(pred: &LabelMask, truth: &LabelMask) -> Result<ConfusionCounts> {
    if !pred.same_dims(truth.width(), truth.height()) {
        return Err(Error::InvalidInput(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    confusion_from(&pred.foreground(), &truth.foreground())
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    c.recall()
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    c.precision()
}

/// Set-form Dice `2|A∩B| / (|A| + |B|)` over foreground pixels.
pub fn dice(pred: &LabelMask, truth: &LabelMask) -> Result<f64> {
    if !pred.same_dims(truth.width(), truth.height()) {
        return Err(Error::InvalidInput("dice on masks of different size".into()));
    }
    let a = pred.foreground_count() as u64;
    let b = truth.foreground_count() as u64;
    let both = pred
        .labels()
        .iter()
        .zip(truth.labels())
        .filter(|(p, t)| **p > 0 && **t > 0)
        .count() as u64;
    Ok(ratio(2 * both, a + b, true))
}

/// Dice of the pixels carrying `label` in each mask.
pub fn label_dice(pred: &LabelMask, truth: &LabelMask, label: u8) -> Result<f64> {
    let p: Vec<bool> = pred.labels().iter().map(|&l| l == label).collect();
    let t: Vec<bool> = truth.labels().iter().map(|&l| l == label).collect();
    Ok(confusion_from(&p, &t)?.dice())
}

/// Binary scores of one slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceScore {
    pub volume: String,
    pub slice: u32,
    pub recall: f64,
    pub precision: f64,
    pub dice: f64,
}

impl SliceScore {
    pub fn new(volume: &str, slice: u32, c: &ConfusionCounts) -> Self {
        SliceScore {
            volume: volume.to_string(),
            slice,
            recall: c.recall(),
            precision: c.precision(),
            dice: c.dice(),
        }
    }
}

/// Per-muscle Dice of a labeled slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuscleScore {
    pub volume: String,
    pub slice: u32,
    pub muscle: u8,
    pub dice: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolumeSummary {
    pub recall: MeanStd,
    pub precision: MeanStd,
    pub dice: MeanStd,
    /// Mean and std over all (slice, muscle) Dice values of the volume.
    pub muscle_dice: Option<MeanStd>,
}

/// Per-slice scores with per-volume mean and standard deviation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub slices: Vec<SliceScore>,
    pub muscles: Vec<MuscleScore>,
    pub volumes: BTreeMap<String, VolumeSummary>,
}

impl EvalReport {
    /// Build the report, sorting rows by (volume, slice[, muscle]).
    pub fn new(mut slices: Vec<SliceScore>, mut muscles: Vec<MuscleScore>) -> Self {
        slices.sort_by(|a, b| a.volume.cmp(&b.volume).then(a.slice.cmp(&b.slice)));
        muscles.sort_by(|a, b| {
            a.volume
                .cmp(&b.volume)
                .then(a.slice.cmp(&b.slice))
                .then(a.muscle.cmp(&b.muscle))
        });
        let mut volumes = BTreeMap::new();
        let mut ids: Vec<&str> = slices.iter().map(|s| s.volume.as_str()).collect();
        ids.dedup();
        for id in ids {
            let rows: Vec<&SliceScore> = slices.iter().filter(|s| s.volume == id).collect();
            let pick = |f: fn(&SliceScore) -> f64| mean_std(&rows.iter().map(|s| f(s)).collect::<Vec<_>>());
            let md: Vec<f64> = muscles.iter().filter(|m| m.volume == id).map(|m| m.dice).collect();
            volumes.insert(
                id.to_string(),
                VolumeSummary {
                    recall: pick(|s| s.recall),
                    precision: pick(|s| s.precision),
                    dice: pick(|s| s.dice),
                    muscle_dice: (!md.is_empty()).then(|| mean_std(&md)),
                },
            );
        }
        EvalReport {
            slices,
            muscles,
            volumes,
        }
    }

    /// Mean over every slice (not over volume means).
    pub fn overall(&self) -> (f64, f64, f64) {
        let col = |f: fn(&SliceScore) -> f64| mean_std(&self.slices.iter().map(f).collect::<Vec<_>>()).mean;
        (col(|s| s.recall), col(|s| s.precision), col(|s| s.dice))
    }

    /// Mean over every (slice, muscle) labeled Dice.
    pub fn overall_muscle_dice(&self) -> Option<f64> {
        (!self.muscles.is_empty())
            .then(|| mean_std(&self.muscles.iter().map(|m| m.dice).collect::<Vec<_>>()).mean)
    }

    /// `volume,slice,recall,precision,dice`
    pub fn slices_csv(&self) -> String {
        let mut out = String::from("volume,slice,recall,precision,dice\n");
        for s in &self.slices {
            let _ = writeln!(out, "{},{},{},{},{}", s.volume, s.slice, s.recall, s.precision, s.dice);
        }
        out
    }

    /// `volume,metric,mean,std`
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("volume,metric,mean,std\n");
        for (id, v) in &self.volumes {
            let mut rows = vec![("recall", v.recall), ("precision", v.precision), ("dice", v.dice)];
            if let Some(m) = v.muscle_dice {
                rows.push(("muscle_dice", m));
            }
            for (name, ms) in rows {
                let _ = writeln!(out, "{id},{name},{},{}", ms.mean, ms.std);
            }
        }
        out
    }

    /// `volume,slice,muscle,dice`
    pub fn muscles_csv(&self) -> String {
        let mut out = String::from("volume,slice,muscle,dice\n");
        for m in &self.muscles {
            let _ = writeln!(out, "{},{},{},{}", m.volume, m.slice, m.muscle, m.dice);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(bits: &[bool], w: usize) -> LabelMask {
        LabelMask::from_binary(w, bits.len() / w, bits).unwrap()
    }

    #[test]
    fn identical_masks() {
        let m = LabelMask::from_fn(10, 20, |x, _| (x < 5) as u8);
        let c = confusion(&m, &m).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (100, 0, 0));
        assert_eq!((c.recall(), c.precision(), c.dice()), (1.0, 1.0, 1.0));
        assert_eq!(dice(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn empty_prediction() {
        let truth = LabelMask::from_fn(10, 20, |x, _| (x < 5) as u8 * 3);
        let pred = LabelMask::background(10, 20);
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 100));
        assert_eq!((c.recall(), c.precision(), c.dice()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_versus_empty_is_perfect() {
        let e = LabelMask::background(4, 4);
        let c = confusion(&e, &e).unwrap();
        assert_eq!((c.recall(), c.precision(), c.dice()), (1.0, 1.0, 1.0));
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn half_overlap() {
        let a = LabelMask::from_fn(20, 10, |x, _| (x < 10) as u8);
        let b = LabelMask::from_fn(20, 10, |x, _| (5..15).contains(&x) as u8);
        let c = confusion(&a, &b).unwrap();
        assert_eq!((c.recall(), c.precision(), c.dice()), (0.5, 0.5, 0.5));
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(confusion(&LabelMask::background(3, 3), &LabelMask::background(3, 4)).is_err());
    }

    #[test]
    fn volume_aggregation() {
        let s = |v: &str, i, d| SliceScore {
            volume: v.into(),
            slice: i,
            recall: d,
            precision: d,
            dice: d,
        };
        let r = EvalReport::new(vec![s("b", 1, 0.5), s("a", 2, 0.25), s("a", 1, 0.75)], vec![]);
        assert_eq!(r.slices[0].slice, 1);
        assert_eq!(r.slices[0].volume, "a");
        let a = &r.volumes["a"];
        assert_eq!(a.dice.mean, 0.5);
        assert_eq!(a.dice.std, 0.25);
        assert_eq!(r.volumes["b"].dice.std, 0.0);
        assert!(r.summary_csv().starts_with("volume,metric,mean,std\na,recall,0.5,0.25\n"));
    }

    proptest! {
        #[test]
        fn swapping_masks_exchanges_recall_and_precision(bits in proptest::collection::vec(any::<(bool, bool)>(), 64)) {
            let a: Vec<bool> = bits.iter().map(|b| b.0).collect();
            let b: Vec<bool> = bits.iter().map(|b| b.1).collect();
            let (ma, mb) = (mask_from(&a, 8), mask_from(&b, 8));
            let ab = confusion(&ma, &mb).unwrap();
            let ba = confusion(&mb, &ma).unwrap();
            prop_assert_eq!(ab.recall(), ba.precision());
            prop_assert_eq!(ab.precision(), ba.recall());
            prop_assert_eq!(ab.dice(), dice(&ma, &mb).unwrap());
            prop_assert_eq!(ab.total(), 64);
        }

        #[test]
        fn metrics_ignore_joint_permutation(bits in proptest::collection::vec(any::<(bool, bool)>(), 30), rot in 0usize..30) {
            let a: Vec<bool> = bits.iter().map(|b| b.0).collect();
            let b: Vec<bool> = bits.iter().map(|b| b.1).collect();
            let mut pa = a.clone();
            let mut pb = b.clone();
            pa.rotate_left(rot);
            pb.rotate_left(rot);
            pa.reverse();
            pb.reverse();
            prop_assert_eq!(confusion_from(&a, &b).unwrap(), confusion_from(&pa, &pb).unwrap());
        }
    }
}
