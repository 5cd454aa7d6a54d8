use std::fs;

use myoseg::config::RunConfig;
use myoseg::imgio::DatasetManifest;
use myoseg::metrics::{cross_validate, mean_std};
use myoseg::phantom::{generate_dataset, PhantomSpec};
use myoseg::pipeline::{cmd_atlas, cmd_crossval, cmd_eval, cmd_label, cmd_predict, cmd_train};

fn quick_config() -> RunConfig {
    RunConfig {
        seed: 4,
        rounds: 40,
        ..Default::default()
    }
}

#[test]
fn staged_commands_reproduce_cross_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let manifest = generate_dataset(&PhantomSpec::default(), 3, 3, 2, &data).unwrap();
    let config = quick_config();
    let cv = cmd_crossval(&manifest, &config, &tmp.path().join("cv")).unwrap();
    assert!(cv.failures.is_empty());

    for held in manifest.volume_ids() {
        let train_m = manifest.filtered(|v| v != held);
        let test_m = manifest.filtered(|v| v == held);
        let stage = tmp.path().join(held);
        cmd_train(&train_m, &config, &stage.join("train")).unwrap();
        let fold_model = tmp.path().join("cv/folds").join(held).join("model.json");
        assert_eq!(
            fs::read(stage.join("train/model.json")).unwrap(),
            fs::read(fold_model).unwrap()
        );
        cmd_predict(&stage.join("train/model.json"), &test_m, &config, &stage.join("pred")).unwrap();
        let binary = cmd_eval(&stage.join("pred/masks"), &test_m, &config, &stage.join("eval")).unwrap();
        let expected: Vec<_> = cv.report.slices.iter().filter(|s| s.volume == held).cloned().collect();
        assert_eq!(binary.slices, expected);
        assert!(binary.muscles.is_empty());

        cmd_atlas(&train_m, &config, &stage.join("atlas")).unwrap();
        let failures = cmd_label(&stage.join("pred/masks"), &stage.join("atlas"), &test_m, &config, &stage.join("label")).unwrap();
        assert!(failures.is_empty());
        let labeled = cmd_eval(&stage.join("label/labels"), &test_m, &config, &stage.join("eval_labels")).unwrap();
        assert_eq!(labeled.slices, expected);
        let expected_muscles: Vec<_> = cv.report.muscles.iter().filter(|m| m.volume == held).cloned().collect();
        assert!(!expected_muscles.is_empty());
        assert_eq!(labeled.muscles, expected_muscles);
    }
}

#[test]
fn two_volumes_give_two_disjoint_folds() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&PhantomSpec::default(), 5, 2, 2, tmp.path()).unwrap();
    let cv = cross_validate(&manifest, &quick_config()).unwrap();
    assert_eq!(cv.folds.len(), 2);
    for f in &cv.folds {
        assert_eq!(f.train_volumes.len(), 1);
        assert!(!f.train_volumes.contains(&f.volume));
    }
    assert_eq!(cv.report.volumes.len(), 2);
    for (v, summary) in &cv.report.volumes {
        let dice: Vec<f64> = cv.report.slices.iter().filter(|s| &s.volume == v).map(|s| s.dice).collect();
        let expected = dice.iter().sum::<f64>() / dice.len() as f64;
        assert_eq!(summary.dice.mean, expected);
        assert_eq!(summary.dice, mean_std(&dice));
    }
}

#[test]
fn cross_validation_requires_ground_truth_and_two_volumes() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&PhantomSpec::default(), 5, 2, 1, tmp.path()).unwrap();
    let one = manifest.filtered(|v| v == "vol01");
    assert!(cross_validate(&one, &quick_config()).is_err());
    let mut stripped = manifest.clone();
    stripped.volumes[1].slices[0].mask = None;
    let stripped = DatasetManifest::new(stripped.volumes, manifest.base_dir()).unwrap();
    assert!(cross_validate(&stripped, &quick_config()).is_err());
}

#[test]
fn outputs_echo_the_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(&PhantomSpec::default(), 6, 2, 1, tmp.path().join("d")).unwrap();
    let config = quick_config();
    let out = tmp.path().join("train");
    cmd_train(&manifest, &config, &out).unwrap();
    let echoed = RunConfig::load(out.join("config.json")).unwrap();
    assert_eq!(echoed, config);
}
