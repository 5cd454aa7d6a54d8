//! Discrete AdaBoost over axis-aligned decision stumps.

mod labels;

pub use labels::{blocks_to_mask, derive_block_labels, disk_offsets, erode_labels};

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DESCRIPTOR_LEN;

/// Bounds applied to the weighted error before computing α.
pub const EPS_CLAMP: f64 = 1e-10;
/// Weighted errors closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Threshold standing in for "below every value".
pub const LOW_SENTINEL: f64 = -f64::MAX;
/// Threshold standing in for "above every value".
pub const HIGH_SENTINEL: f64 = f64::MAX;

/// `h(x) = polarity` when `x[feature] > threshold`, else `-polarity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    #[serde(rename = "f")]
    pub feature: usize,
    #[serde(rename = "thr")]
    pub threshold: f64,
    #[serde(rename = "pol")]
    pub polarity: i8,
}

impl Stump {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> i8 {
        if x[self.feature] > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedStump {
    #[serde(flatten)]
    pub stump: Stump,
    pub alpha: f64,
}

/// Weighted vote of decision stumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongClassifier {
    /// Requested number of rounds; `rounds.len()` is smaller after early stop.
    #[serde(rename = "T")]
    pub max_rounds: usize,
    /// Descriptor length the model was trained on.
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub rounds: Vec<WeightedStump>,
}

fn default_dim() -> usize {
    DESCRIPTOR_LEN
}

impl StrongClassifier {
    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "descriptor has {} components, model expects {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `Σ α_t h_t(x)`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self
            .rounds
            .iter()
            .map(|r| r.alpha * f64::from(r.stump.predict(x)))
            .sum())
    }

    /// Sign of the score, with `sign(0) = -1`.
    pub fn classify(&self, x: &[f64]) -> Result<i8> {
        Ok(sign(self.score(x)?))
    }

    /// Scores and labels of consecutive descriptors in `flat`.
    pub fn predict_blocks(&self, flat: &[f64]) -> Result<(Vec<f64>, Vec<i8>)> {
        if self.dim == 0 || !flat.len().is_multiple_of(self.dim) {
            return Err(Error::InvalidInput(format!(
                "descriptor buffer of length {} is not a multiple of {}",
                flat.len(),
                self.dim
            )));
        }
        let scores: Vec<f64> = flat
            .chunks_exact(self.dim)
            .map(|x| self.score(x))
            .collect::<Result<_>>()?;
        let labels = scores.iter().map(|&s| sign(s)).collect();
        Ok((scores, labels))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let clf: StrongClassifier =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        for r in &clf.rounds {
            if r.stump.feature >= clf.dim
                || !r.stump.threshold.is_finite()
                || !r.alpha.is_finite()
                || r.stump.polarity.abs() != 1
            {
                return Err(Error::format(path, format!("invalid round {r:?}")));
            }
        }
        Ok(clf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[inline]
pub fn sign(score: f64) -> i8 {
    if score > 0.0 {
        1
    } else {
        -1
    }
}

/// Where a training sample came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockOrigin {
    pub volume: String,
    pub slice: u32,
    pub row: usize,
    pub col: usize,
}

/// Row-major feature matrix with ±1 labels.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<i8>,
    pub provenance: Vec<BlockOrigin>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> Self {
        TrainingSet {
            dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, x: &[f64], y: i8, origin: BlockOrigin) {
        assert_eq!(x.len(), self.dim);
        self.features.extend_from_slice(x);
        self.labels.push(y);
        self.provenance.push(origin);
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Copy of the subset selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        let mut out = TrainingSet::new(self.dim);
        for &i in indices {
            out.push(self.sample(i), self.labels[i], self.provenance[i].clone());
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::Training(format!(
                "need at least 2 samples, got {}",
                self.len()
            )));
        }
        if self.features.len() != self.len() * self.dim {
            return Err(Error::Training("feature matrix shape mismatch".into()));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite feature value".into()));
        }
        if self.labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::Training("labels must be +1 or -1".into()));
        }
        let pos = self.labels.iter().filter(|&&y| y > 0).count();
        if pos == 0 || pos == self.len() {
            return Err(Error::Training(
                "training set contains a single class".into(),
            ));
        }
        Ok(())
    }
}

/// Statistics recorded after each boosting round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    /// Weighted error of the selected stump (before clamping).
    pub eps: f64,
    pub alpha: f64,
    /// Misclassification rate of the ensemble so far.
    pub train_err: f64,
    /// Mean of `exp(-y · score)` over the training set.
    pub exp_loss: f64,
    /// Sum of sample weights after renormalization.
    pub weight_sum: f64,
    pub min_weight: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: StrongClassifier,
    pub history: Vec<RoundStats>,
}

impl TrainOutcome {
    /// Write the per-round CSV `t,eps,alpha,train_err,exp_loss`.
    pub fn write_report(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("t,eps,alpha,train_err,exp_loss\n");
        for s in &self.history {
            out += &format!(
                "{},{},{},{},{}\n",
                s.round, s.eps, s.alpha, s.train_err, s.exp_loss
            );
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// One feature column sorted ascending, with labels carried along.
struct SortedColumn {
    order: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<i8>,
}

impl SortedColumn {
    fn new(data: &TrainingSet, feature: usize) -> Self {
        let mut order: Vec<u32> = (0..data.len() as u32).collect();
        order.sort_by(|&a, &b| {
            let va = data.features[a as usize * data.dim + feature];
            let vb = data.features[b as usize * data.dim + feature];
            va.total_cmp(&vb).then(a.cmp(&b))
        });
        let values = order
            .iter()
            .map(|&i| data.features[i as usize * data.dim + feature])
            .collect();
        let labels = order.iter().map(|&i| data.labels[i as usize]).collect();
        SortedColumn {
            order,
            values,
            labels,
        }
    }

    /// Visit every candidate `(threshold, err(+1), err(-1))` in ascending
    /// threshold order; stop early when `visit` returns true.
    fn scan(&self, weights: &[f64], pos_total: f64, neg_total: f64, mut visit: impl FnMut(f64, f64, f64) -> bool) {
        // below-or-equal weight of positives / negatives
        let (mut bp, mut bn) = (0.0, 0.0);
        let errs = |bp: f64, bn: f64| (bp + (neg_total - bn), (pos_total - bp) + bn);
        let (e_pos, e_neg) = errs(bp, bn);
        if visit(LOW_SENTINEL, e_pos, e_neg) {
            return;
        }
        let n = self.values.len();
        for k in 0..n {
            let w = weights[self.order[k] as usize];
            if self.labels[k] > 0 {
                bp += w;
            } else {
                bn += w;
            }
            let thr = if k + 1 == n {
                HIGH_SENTINEL
            } else if self.values[k + 1] != self.values[k] {
                midpoint(self.values[k], self.values[k + 1])
            } else {
                continue;
            };
            let (e_pos, e_neg) = errs(bp, bn);
            if visit(thr, e_pos, e_neg) {
                return;
            }
        }
    }
}

/// Midpoint that is guaranteed to separate `lo < hi` under `x > thr`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Clamped-ε stump weight `½ ln((1 − ε) / ε)`.
pub fn stump_alpha(eps: f64) -> f64 {
    let e = eps.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP);
    0.5 * ((1.0 - e) / e).ln()
}

/// Lowest-error stump under `weights`: minimal error, ties (within
/// [`TIE_TOLERANCE`]) resolved by feature index, then threshold, then
/// polarity +1 before −1.
fn select_stump(columns: &[SortedColumn], weights: &[f64], labels: &[i8]) -> (Stump, f64) {
    let mut pos_total = 0.0;
    let mut neg_total = 0.0;
    for (&w, &y) in weights.iter().zip(labels) {
        if y > 0 {
            pos_total += w;
        } else {
            neg_total += w;
        }
    }
    let minima: Vec<f64> = columns
        .par_iter()
        .map(|col| {
            let mut best = f64::INFINITY;
            col.scan(weights, pos_total, neg_total, |_, ep, en| {
                best = best.min(ep).min(en);
                false
            });
            best
        })
        .collect();
    let global = minima.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = global + TIE_TOLERANCE;
    for (feature, col) in columns.iter().enumerate() {
        if minima[feature] > bound {
            continue;
        }
        let mut found = None;
        col.scan(weights, pos_total, neg_total, |thr, ep, en| {
            if ep <= bound {
                found = Some((thr, 1, ep));
            } else if en <= bound {
                found = Some((thr, -1, en));
            }
            found.is_some()
        });
        if let Some((threshold, polarity, err)) = found {
            return (
                Stump {
                    feature,
                    threshold,
                    polarity,
                },
                err,
            );
        }
    }
    unreachable!("the global minimum is attained by some candidate")
}

/// Train a discrete AdaBoost ensemble for up to `rounds` rounds.
///
/// Stops early when no stump beats chance (ε ≥ 0.5, round not recorded) or
/// when a stump is perfect (ε = 0, round recorded).
pub fn train_adaboost(data: &TrainingSet, rounds: usize) -> Result<TrainOutcome> {
    data.validate()?;
    let n = data.len();
    let columns: Vec<SortedColumn> = (0..data.dim)
        .into_par_iter()
        .map(|f| SortedColumn::new(data, f))
        .collect();
    let mut weights = vec![1.0 / n as f64; n];
    let mut scores = vec![0.0; n];
    let mut classifier = StrongClassifier {
        max_rounds: rounds,
        dim: data.dim,
        rounds: Vec::with_capacity(rounds),
    };
    let mut history = Vec::with_capacity(rounds);
    let mut votes = vec![0i8; n];

    for round in 1..=rounds {
        let (stump, eps) = select_stump(&columns, &weights, &data.labels);
        if eps >= 0.5 {
            break;
        }
        let alpha = stump_alpha(eps);
        for (i, v) in votes.iter_mut().enumerate() {
            *v = stump.predict(data.sample(i));
        }
        let mut sum = 0.0;
        for i in 0..n {
            let margin = f64::from(data.labels[i]) * f64::from(votes[i]);
            weights[i] *= (-alpha * margin).exp();
            sum += weights[i];
            scores[i] += alpha * f64::from(votes[i]);
        }
        for w in &mut weights {
            *w /= sum;
        }
        let mut wrong = 0usize;
        let mut loss = 0.0;
        for i in 0..n {
            if sign(scores[i]) != data.labels[i] {
                wrong += 1;
            }
            loss += (-f64::from(data.labels[i]) * scores[i]).exp();
        }
        classifier.rounds.push(WeightedStump { stump, alpha });
        history.push(RoundStats {
            round,
            eps,
            alpha,
            train_err: wrong as f64 / n as f64,
            exp_loss: loss / n as f64,
            weight_sum: weights.iter().sum(),
            min_weight: weights.iter().copied().fold(f64::INFINITY, f64::min),
        });
        log::debug!("round {round}: eps={eps:.6} alpha={alpha:.4} err={:.4}", wrong as f64 / n as f64);
        if eps == 0.0 {
            break;
        }
    }
    Ok(TrainOutcome {
        classifier,
        history,
    })
}
