//! Pipeline stages and the command entry points built on them.
//!
//! Every command writes into its own output directory and echoes the
//! resolved [`RunConfig`] there. Predicted masks live at
//! `<dir>/<volume>/<image stem>.png`, which is also where `cmd_label` and
//! `cmd_eval` look for them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::atlas::{build_atlas, MuscleAtlas};
use crate::boost::{blocks_to_mask, derive_block_labels, erode_labels, train_adaboost, BlockOrigin, StrongClassifier, TrainOutcome, TrainingSet};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::{assemble_descriptor, DescriptorGrid, FeatureParams};
use crate::imgio::{load_mask, save_mask, save_overlay, DatasetManifest, GrayImage, LabelMask, SliceRef};
use crate::metrics::{confusion, label_dice, EvalReport, MuscleScore, SliceScore};
use crate::phantom::{generate_dataset, PhantomSpec};

/// A loaded slice with its block descriptors.
#[derive(Debug, Clone)]
pub struct SliceData {
    pub volume: String,
    pub index: u32,
    /// Image file stem, used to name per-slice outputs.
    pub stem: String,
    pub image: GrayImage,
    pub mask: Option<LabelMask>,
    pub descriptors: DescriptorGrid,
}

impl SliceData {
    fn truth(&self) -> Result<&LabelMask> {
        self.mask.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("{} slice {}: no ground-truth mask", self.volume, self.index))
        })
    }
}

pub fn slice_stem(s: &SliceRef<'_>) -> String {
    s.entry
        .image
        .file_stem()
        .map(|x| x.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("slice_{:02}", s.entry.index))
}

/// Where per-slice outputs for (`volume`, `stem`) go below `dir`.
pub fn slice_output(dir: &Path, volume: &str, stem: &str) -> PathBuf {
    dir.join(volume).join(format!("{stem}.png"))
}

/// Load every slice of `manifest` and compute its descriptors.
pub fn prepare_slices(manifest: &DatasetManifest, params: &FeatureParams) -> Result<Vec<SliceData>> {
    let refs: Vec<SliceRef<'_>> = manifest.slices().collect();
    refs.par_iter()
        .map(|s| {
            let loaded = manifest.load_slice(s)?;
            let descriptors = assemble_descriptor(&loaded.image, params)?;
            Ok(SliceData {
                volume: loaded.volume,
                index: loaded.index,
                stem: slice_stem(s),
                image: loaded.image,
                mask: loaded.mask,
                descriptors,
            })
        })
        .collect()
}

/// Block training samples from slices with ground truth.
pub fn training_set<'a>(slices: impl IntoIterator<Item = &'a SliceData>, erosion_radius: usize) -> Result<TrainingSet> {
    let mut set: Option<TrainingSet> = None;
    for s in slices {
        let truth = s.truth()?;
        let d = &s.descriptors;
        let set = set.get_or_insert_with(|| TrainingSet::new(d.dim()));
        if set.dim != d.dim() {
            return Err(Error::InvalidInput("slices disagree on descriptor length".into()));
        }
        let labels = derive_block_labels(&erode_labels(truth, erosion_radius), &d.grid)?;
        for (i, (x, &y)) in d.rows().zip(&labels).enumerate() {
            let origin = BlockOrigin {
                volume: s.volume.clone(),
                slice: s.index,
                row: i / d.grid.cols,
                col: i % d.grid.cols,
            };
            set.push(x, y, origin);
        }
    }
    set.ok_or_else(|| Error::InvalidInput("no training slices".into()))
}

pub fn train<'a>(slices: impl IntoIterator<Item = &'a SliceData>, config: &RunConfig) -> Result<TrainOutcome> {
    let set = training_set(slices, config.erosion_radius)?;
    log::info!("training on {} blocks for up to {} rounds", set.len(), config.rounds);
    train_adaboost(&set, config.rounds)
}

/// Full-resolution binary prediction; pixels outside the block grid are
/// background.
pub fn predict_slice(clf: &StrongClassifier, slice: &SliceData) -> Result<LabelMask> {
    let (_, labels) = clf.predict_blocks(slice.descriptors.as_flat())?;
    blocks_to_mask(&labels, &slice.descriptors.grid, slice.image.width(), slice.image.height())
}

/// Build an atlas from slices with ground truth, picking the reference by
/// the configured policy over the slices in order.
pub fn atlas_from<'a>(slices: &[&'a SliceData], config: &RunConfig) -> Result<(MuscleAtlas, &'a SliceData)> {
    let masks = slices.iter().map(|s| s.truth().cloned()).collect::<Result<Vec<_>>>()?;
    let images: Vec<GrayImage> = slices.iter().map(|s| s.image.clone()).collect();
    let reference = config.atlas_reference.choose(config.seed, slices.len())?;
    let build = build_atlas(&masks, &images, reference, &config.bone)?;
    for (i, e) in &build.skipped {
        log::warn!("{} slice {}: left out of atlas: {e}", slices[*i].volume, slices[*i].index);
    }
    Ok((build.atlas, slices[reference]))
}

/// Binary scores, plus per-muscle Dice when `pred` carries muscle labels
/// (a palette or any label above 1).
pub fn score_slice(volume: &str, slice: u32, pred: &LabelMask, truth: &LabelMask) -> Result<(SliceScore, Vec<MuscleScore>)> {
    let c = confusion(pred, truth)?;
    let score = SliceScore::new(volume, slice, &c);
    let labeled = !pred.palette.is_empty() || pred.labels().iter().any(|&l| l > 1);
    let mut muscles = Vec::new();
    if labeled {
        let ids: std::collections::BTreeSet<u8> = truth.muscle_ids().union(&pred.muscle_ids()).copied().collect();
        for id in ids {
            muscles.push(MuscleScore {
                volume: volume.to_string(),
                slice,
                muscle: id,
                dice: label_dice(pred, truth, id)?,
            });
        }
    }
    Ok((score, muscles))
}

/// A per-slice stage failure that did not abort the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub volume: String,
    pub slice: u32,
    pub stage: String,
    pub error: String,
}

pub fn failures_csv(failures: &[Failure]) -> String {
    let mut out = String::from("volume,slice,stage,error\n");
    for f in failures {
        let msg = f.error.replace('"', "'");
        let _ = writeln!(out, "{},{},{},\"{}\"", f.volume, f.slice, f.stage, msg);
    }
    out
}

/// Per-fold bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldInfo {
    pub volume: String,
    pub train_volumes: Vec<String>,
    pub train_blocks: usize,
    pub rounds: usize,
    /// (volume, slice) of the atlas reference, when the atlas was built.
    pub atlas_reference: Option<(String, u32)>,
}

/// Predictions for one held-out slice.
#[derive(Debug, Clone)]
pub struct SlicePrediction {
    pub volume: String,
    pub index: u32,
    pub stem: String,
    pub binary: LabelMask,
    pub labeled: Option<LabelMask>,
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub report: EvalReport,
    pub failures: Vec<Failure>,
    pub folds: Vec<FoldInfo>,
    pub predictions: Vec<SlicePrediction>,
    pub models: BTreeMap<String, TrainOutcome>,
}

/// Leave-one-volume-out evaluation of the whole pipeline.
pub fn cross_validate(manifest: &DatasetManifest, config: &RunConfig) -> Result<CrossValidation> {
    config.validate()?;
    let volumes: Vec<String> = manifest.volume_ids().iter().map(|s| s.to_string()).collect();
    if volumes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs at least 2 volumes, got {}",
            volumes.len()
        )));
    }
    let slices = prepare_slices(manifest, &config.features)?;
    for s in &slices {
        s.truth()?;
    }
    let mut scores = Vec::new();
    let mut muscle_scores = Vec::new();
    let mut failures = Vec::new();
    let mut folds = Vec::new();
    let mut predictions = Vec::new();
    let mut models = BTreeMap::new();
    for held in &volumes {
        log::info!("fold {held}");
        let train_slices: Vec<&SliceData> = slices.iter().filter(|s| &s.volume != held).collect();
        let test_slices: Vec<&SliceData> = slices.iter().filter(|s| &s.volume == held).collect();
        let outcome = train(train_slices.iter().copied(), config)?;
        let atlas = match atlas_from(&train_slices, config) {
            Ok((a, r)) => Some((a, (r.volume.clone(), r.index))),
            Err(e) => {
                log::warn!("fold {held}: atlas failed: {e}");
                for s in &test_slices {
                    failures.push(Failure {
                        volume: s.volume.clone(),
                        slice: s.index,
                        stage: "atlas".into(),
                        error: e.to_string(),
                    });
                }
                None
            }
        };
        for s in &test_slices {
            let truth = s.truth()?;
            let binary = predict_slice(&outcome.classifier, s)?;
            let (score, _) = score_slice(&s.volume, s.index, &binary, truth)?;
            scores.push(score);
            let labeled = match &atlas {
                Some((a, _)) => match a.label_segmentation(&binary, &s.image, &config.bone) {
                    Ok(l) => {
                        let (_, m) = score_slice(&s.volume, s.index, &l, truth)?;
                        muscle_scores.extend(m);
                        Some(l)
                    }
                    Err(e) => {
                        log::warn!("{} slice {}: labeling failed: {e}", s.volume, s.index);
                        failures.push(Failure {
                            volume: s.volume.clone(),
                            slice: s.index,
                            stage: "label".into(),
                            error: e.to_string(),
                        });
                        None
                    }
                },
                None => None,
            };
            predictions.push(SlicePrediction {
                volume: s.volume.clone(),
                index: s.index,
                stem: s.stem.clone(),
                binary,
                labeled,
            });
        }
        folds.push(FoldInfo {
            volume: held.clone(),
            train_volumes: volumes.iter().filter(|v| *v != held).cloned().collect(),
            train_blocks: train_slices.iter().map(|s| s.descriptors.len()).sum(),
            rounds: outcome.classifier.rounds.len(),
            atlas_reference: atlas.map(|(_, r)| r),
        });
        models.insert(held.clone(), outcome);
    }
    Ok(CrossValidation {
        report: EvalReport::new(scores, muscle_scores),
        failures,
        folds,
        predictions,
        models,
    })
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `report.csv`, `summary.csv`, `muscles.csv` and `report.json`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    write(&dir.join("report.csv"), report.slices_csv())?;
    write(&dir.join("summary.csv"), report.summary_csv())?;
    write(&dir.join("muscles.csv"), report.muscles_csv())?;
    write(&dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")
}

/// Generate a phantom dataset; returns the manifest path.
pub fn cmd_phantom(
    spec_path: Option<&Path>,
    out: &Path,
    volumes: usize,
    slices: Option<usize>,
    seed: Option<u64>,
) -> Result<PathBuf> {
    let spec = match spec_path {
        Some(p) => PhantomSpec::load(p)?,
        None => PhantomSpec::default(),
    };
    let seed = seed.unwrap_or(spec.seed);
    let slices = slices.unwrap_or(spec.slices);
    generate_dataset(&spec, seed, volumes, slices, out)?;
    Ok(out.join("manifest.json"))
}

/// One CSV row per block: `volume,slice,row,col,f00..`.
pub fn cmd_features(manifest: &DatasetManifest, config: &RunConfig, out: &Path) -> Result<()> {
    let slices = prepare_slices(manifest, &config.features)?;
    let dim = config.features.layout().len();
    let mut csv = String::from("volume,slice,row,col");
    for i in 0..dim {
        let _ = write!(csv, ",f{i:02}");
    }
    csv.push('\n');
    for s in &slices {
        let cols = s.descriptors.grid.cols;
        for (i, x) in s.descriptors.rows().enumerate() {
            let _ = write!(csv, "{},{},{},{}", s.volume, s.index, i / cols, i % cols);
            for v in x {
                let _ = write!(csv, ",{v}");
            }
            csv.push('\n');
        }
    }
    write(out, csv)?;
    if let Some(dir) = out.parent() {
        config.echo(dir)?;
    }
    Ok(())
}

/// Train on every slice of `manifest`: `model.json`, `training_report.csv`.
pub fn cmd_train(manifest: &DatasetManifest, config: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let slices = prepare_slices(manifest, &config.features)?;
    let outcome = train(&slices, config)?;
    create_dir(out)?;
    outcome.classifier.save(out.join("model.json"))?;
    outcome.write_report(out.join("training_report.csv"))?;
    config.echo(out)?;
    Ok(outcome)
}

/// Binary masks under `out/masks`, overlays under `out/overlays`.
pub fn cmd_predict(model: &Path, manifest: &DatasetManifest, config: &RunConfig, out: &Path) -> Result<()> {
    let clf = StrongClassifier::load(model)?;
    if clf.dim != config.features.layout().len() {
        return Err(Error::Config(format!(
            "model expects {} features, config produces {}",
            clf.dim,
            config.features.layout().len()
        )));
    }
    let slices = prepare_slices(manifest, &config.features)?;
    for s in &slices {
        let mask = predict_slice(&clf, s)?;
        save_mask(&mask, slice_output(&out.join("masks"), &s.volume, &s.stem))?;
        save_overlay(&s.image, &mask, slice_output(&out.join("overlays"), &s.volume, &s.stem))?;
    }
    config.echo(out)
}

/// Atlas from every slice of `manifest`.
pub fn cmd_atlas(manifest: &DatasetManifest, config: &RunConfig, out: &Path) -> Result<MuscleAtlas> {
    let slices = prepare_slices(manifest, &config.features)?;
    let refs: Vec<&SliceData> = slices.iter().collect();
    let (atlas, reference) = atlas_from(&refs, config)?;
    log::info!("atlas reference: {} slice {}", reference.volume, reference.index);
    atlas.save(out)?;
    config.echo(out)?;
    Ok(atlas)
}

/// Label binary masks found under `masks` with the atlas in `atlas_dir`.
/// Slices that fail are listed in `out/failures.csv`.
pub fn cmd_label(
    masks: &Path,
    atlas_dir: &Path,
    manifest: &DatasetManifest,
    config: &RunConfig,
    out: &Path,
) -> Result<Vec<Failure>> {
    let atlas = MuscleAtlas::load(atlas_dir)?;
    let mut failures = Vec::new();
    for s in manifest.slices() {
        let stem = slice_stem(&s);
        let image = crate::imgio::load_image(manifest.resolve(&s.entry.image))?;
        let binary = load_mask(slice_output(masks, s.volume, &stem))?;
        match atlas.label_segmentation(&binary, &image, &config.bone) {
            Ok(l) => {
                save_mask(&l, slice_output(&out.join("labels"), s.volume, &stem))?;
                save_overlay(&image, &l, slice_output(&out.join("overlays"), s.volume, &stem))?;
            }
            Err(e @ (Error::BoneNotFound | Error::DegenerateKeypoints(_))) => {
                log::warn!("{} slice {}: labeling failed: {e}", s.volume, s.entry.index);
                failures.push(Failure {
                    volume: s.volume.to_string(),
                    slice: s.entry.index,
                    stage: "label".into(),
                    error: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    write(&out.join("failures.csv"), failures_csv(&failures))?;
    config.echo(out)?;
    Ok(failures)
}

/// Score predicted masks under `pred` against the manifest ground truth.
pub fn cmd_eval(pred: &Path, manifest: &DatasetManifest, config: &RunConfig, out: &Path) -> Result<EvalReport> {
    let mut scores = Vec::new();
    let mut muscles = Vec::new();
    for s in manifest.slices() {
        let truth_path = s.entry.mask.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("{} slice {}: no ground-truth mask", s.volume, s.entry.index))
        })?;
        let truth = load_mask(manifest.resolve(truth_path))?;
        let p = load_mask(slice_output(pred, s.volume, &slice_stem(&s)))?;
        let (score, m) = score_slice(s.volume, s.entry.index, &p, &truth)?;
        scores.push(score);
        muscles.extend(m);
    }
    let report = EvalReport::new(scores, muscles);
    write_report(&report, out)?;
    config.echo(out)?;
    Ok(report)
}

/// Cross-validation with every artifact written under `out`.
pub fn cmd_crossval(manifest: &DatasetManifest, config: &RunConfig, out: &Path) -> Result<CrossValidation> {
    let cv = cross_validate(manifest, config)?;
    create_dir(out)?;
    write_report(&cv.report, out)?;
    write(&out.join("failures.csv"), failures_csv(&cv.failures))?;
    write(&out.join("folds.json"), serde_json::to_string_pretty(&cv.folds)? + "\n")?;
    for p in &cv.predictions {
        save_mask(&p.binary, slice_output(&out.join("masks"), &p.volume, &p.stem))?;
        if let Some(l) = &p.labeled {
            save_mask(l, slice_output(&out.join("labels"), &p.volume, &p.stem))?;
        }
    }
    for (volume, outcome) in &cv.models {
        let dir = out.join("folds").join(volume);
        create_dir(&dir)?;
        outcome.classifier.save(dir.join("model.json"))?;
        outcome.write_report(dir.join("training_report.csv"))?;
    }
    config.echo(out)?;
    Ok(cv)
}
