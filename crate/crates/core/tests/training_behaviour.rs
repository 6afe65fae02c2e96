mod common;

use ldssl::data::{generate_two_gaussians, generate_two_moons, mask_labels, LabeledDataset, Standardizer};
use ldssl::eval::compute_metrics;
use ldssl::network::{Activation, LayerSpec, Mlp, Optimizer, OptimizerSpec};
use ldssl::pairing::build_pairs;
use ldssl::training::{
    classifier_gradients, pair_batch_gradients, pair_loss, predict_probabilities, train_bal,
    train_entropy_baseline, train_full_supervised, train_sbc, train_supervised_classifier, StepPhase,
    TrainConfig,
};
use ldssl::LabelState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::flat_params;

fn standardized(ds: &LabeledDataset) -> LabeledDataset {
    let s = Standardizer::fit(ds.features());
    ds.with_features(s.transform(ds.features())).unwrap()
}

fn moons_semi(n: usize, m: f64, seed: u64) -> LabeledDataset {
    let ds = standardized(&generate_two_moons(n, 0.1, seed).unwrap());
    mask_labels(&ds, m, seed).unwrap().0
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_initial_encoder() {
    let ds = moons_semi(200, 0.2, 1);
    let config = quick(0);
    let out = train_bal(&ds, None, &config).unwrap();
    assert_eq!(out.encoder, config.init_encoder(ds.p()).unwrap());
    assert!(out.history.is_empty());
}

#[test]
fn small_step_does_not_increase_pair_loss() {
    let ds = moons_semi(200, 0.3, 2);
    let labeled = ds.labeled_subset();
    let config = quick(1);
    let mut encoder = config.init_encoder(ds.p()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pairs = build_pairs(&labeled.labels, &mut rng).unwrap();
    let before = pair_loss(&encoder, labeled.features.view(), &pairs).unwrap();
    let (_, grads) =
        pair_batch_gradients(&encoder, labeled.features.view(), &pairs.pairs, &pairs.target_values()).unwrap();
    let mut opt = Optimizer::new(OptimizerSpec::sgd(1e-3, 0.0, None));
    opt.step(&mut encoder, &grads).unwrap();
    let after = pair_loss(&encoder, labeled.features.view(), &pairs).unwrap();
    assert!(after <= before, "{after} > {before}");
}

#[test]
fn bal_history_length_and_selection() {
    let ds = moons_semi(300, 0.3, 3);
    let val = moons_semi(100, 0.5, 4);
    let out = train_bal(&ds, Some(&val), &quick(6)).unwrap();
    assert_eq!(out.history.len(), 6);
    let best = out.best_epoch.unwrap();
    let min = out
        .history
        .iter()
        .map(|h| h.validation_loss.unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[best].validation_loss.unwrap(), min);
}

#[test]
fn bal_never_reads_unlabeled_rows() {
    let ds = moons_semi(400, 0.1, 5);
    let before = ds.unlabeled_reads();
    train_bal(&ds, None, &quick(2)).unwrap();
    assert_eq!(ds.unlabeled_reads(), before);
}

#[test]
fn entropy_baseline_never_reads_unlabeled_rows() {
    let ds = moons_semi(400, 0.1, 6);
    train_entropy_baseline(&ds, None, &quick(2)).unwrap();
    assert_eq!(ds.unlabeled_reads(), 0);
}

#[test]
fn sbc_reads_unlabeled_rows_and_keeps_encoder_frozen() {
    let ds = moons_semi(400, 0.1, 7);
    let config = quick(3);
    let encoder = train_bal(&ds, None, &config).unwrap().encoder;
    let snapshot = flat_params(&encoder);
    let bits: Vec<u64> = snapshot.iter().map(|v| v.to_bits()).collect();
    train_sbc(&ds, None, &encoder, &config).unwrap();
    assert!(ds.unlabeled_reads() > 0);
    let after: Vec<u64> = flat_params(&encoder).iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits, after);
}

#[test]
fn sbc_labeled_steps_precede_unlabeled_steps_every_epoch() {
    let ds = moons_semi(400, 0.1, 8);
    let config = quick(4);
    let encoder = train_bal(&ds, None, &config).unwrap().encoder;
    let out = train_sbc(&ds, None, &encoder, &config).unwrap();
    for epoch in 0..4 {
        let phases: Vec<StepPhase> = out.step_log.iter().filter(|s| s.epoch == epoch).map(|s| s.phase).collect();
        let first_unlabeled = phases.iter().position(|p| *p == StepPhase::Unlabeled).unwrap();
        assert!(first_unlabeled > 0);
        assert!(phases[..first_unlabeled].iter().all(|p| *p == StepPhase::Labeled));
        assert!(phases[first_unlabeled..].iter().all(|p| *p == StepPhase::Unlabeled));
        let labeled_steps = ds.m().div_ceil(config.batch_size);
        assert_eq!(first_unlabeled, labeled_steps);
    }
}

#[test]
fn pseudo_labels_are_redrawn_each_epoch() {
    let ds = moons_semi(400, 0.1, 9);
    // An untrained encoder leaves classes entangled, so draws disagree.
    let config = quick(3);
    let encoder = config.init_encoder(ds.p()).unwrap();
    let out = train_sbc(&ds, None, &encoder, &config).unwrap();
    assert_eq!(out.pseudo_labels.len(), 3);
    assert_ne!(out.pseudo_labels[0], out.pseudo_labels[1]);
    assert_ne!(out.pseudo_labels[1], out.pseudo_labels[2]);
}

#[test]
fn sbc_selects_best_validation_accuracy() {
    let ds = moons_semi(400, 0.1, 10);
    let val = moons_semi(150, 1.0, 11);
    let config = quick(8);
    let encoder = train_bal(&ds, None, &config).unwrap().encoder;
    let out = train_sbc(&ds, Some(&val), &encoder, &config).unwrap();
    let accs: Vec<f64> = out.history.iter().map(|h| h.validation_accuracy.unwrap()).collect();
    let best = out.best_epoch.unwrap();
    assert_eq!(accs[best], accs.iter().cloned().fold(f64::MIN, f64::max));
    assert!(accs[..best].iter().all(|&a| a < accs[best]));
}

#[test]
fn sbc_with_no_unlabeled_rows_matches_labeled_only_classifier() {
    let ds = standardized(&generate_two_moons(200, 0.1, 12).unwrap());
    let config = quick(5);
    let encoder = train_bal(&ds, None, &config).unwrap().encoder;
    let sbc = train_sbc(&ds, None, &encoder, &config).unwrap();
    let (clf, _) = train_supervised_classifier(&ds, None, &encoder, &config).unwrap();
    assert_eq!(sbc.classifier, clf);
    assert!(sbc.step_log.iter().all(|s| s.phase == StepPhase::Labeled));
}

#[test]
fn training_is_deterministic() {
    let ds = moons_semi(400, 0.1, 13);
    let config = quick(3);
    let a = train_bal(&ds, None, &config).unwrap();
    let b = train_bal(&ds, None, &config).unwrap();
    assert_eq!(a.encoder, b.encoder);
    let sa = train_sbc(&ds, None, &a.encoder, &config).unwrap();
    let sb = train_sbc(&ds, None, &b.encoder, &config).unwrap();
    assert_eq!(sa.classifier, sb.classifier);
    assert_eq!(sa.pseudo_labels, sb.pseudo_labels);
    let ea = train_entropy_baseline(&ds, None, &config).unwrap();
    let eb = train_entropy_baseline(&ds, None, &config).unwrap();
    assert_eq!(ea.classifier, eb.classifier);
}

#[test]
fn full_supervised_requires_all_labels() {
    let ds = moons_semi(200, 0.5, 14);
    assert!(train_full_supervised(&ds, None, &quick(1)).is_err());
}

#[test]
fn entropy_baseline_separates_far_gaussians() {
    let train = standardized(&generate_two_gaussians(600, 8.0, 15).unwrap());
    let test_raw = generate_two_gaussians(400, 8.0, 16).unwrap();
    let s = Standardizer::fit(generate_two_gaussians(600, 8.0, 15).unwrap().features());
    let test = test_raw.with_features(s.transform(test_raw.features())).unwrap();
    let out = train_full_supervised(&train, None, &quick(10)).unwrap();
    let z = out.encoder.forward(test.features().view()).unwrap();
    let probs = predict_probabilities(&out.classifier, z.view()).unwrap();
    let m = compute_metrics(&test.truth().unwrap(), &probs, 0.5).unwrap();
    assert!(m.accuracy >= 0.99, "{}", m.accuracy);
}

#[test]
fn two_moons_defeats_a_linear_classifier() {
    let train = standardized(&generate_two_moons(1000, 0.1, 17).unwrap());
    let targets: Vec<f64> = train.truth().unwrap().iter().map(|l| l.target()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut linear = Mlp::build(2, &[LayerSpec::new(1, Activation::Sigmoid)], 0.0, false, &mut rng).unwrap();
    let mut opt = Optimizer::new(OptimizerSpec::adam(0.05));
    for _ in 0..500 {
        let (_, g) = classifier_gradients(&linear, train.features().view(), &targets).unwrap();
        opt.step(&mut linear, &g).unwrap();
    }
    let probs = predict_probabilities(&linear, train.features().view()).unwrap();
    let m = compute_metrics(&train.truth().unwrap(), &probs, 0.5).unwrap();
    assert!(m.accuracy > 0.75, "linear fit failed to train: {}", m.accuracy);
    assert!(m.accuracy < 0.95, "moons look linearly separable: {}", m.accuracy);
}

#[test]
fn bal_rejects_singleton_class() {
    let mut labels = vec![LabelState::Unlabeled; 40];
    labels[0] = LabelState::Positive;
    labels[1] = LabelState::Negative;
    labels[2] = LabelState::Negative;
    let ds = generate_two_moons(40, 0.1, 1).unwrap().with_labels(labels).unwrap();
    let err = train_bal(&ds, None, &TrainConfig { batch_size: 2, ..quick(1) }).unwrap_err();
    assert!(err.to_string().contains("Positive") || err.to_string().contains("positive"), "{err}");
}

#[test]
fn sbc_rejects_k_above_anchor_count() {
    let ds = moons_semi(200, 0.1, 18);
    let config = TrainConfig { k: 50, ..quick(1) };
    let encoder = config.init_encoder(ds.p()).unwrap();
    assert!(train_sbc(&ds, None, &encoder, &config).is_err());
}
