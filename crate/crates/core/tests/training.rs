use ldl_core::config::{Objective, TrainConfig, Variant};
use ldl_core::engine::Redistribution;
use ldl_core::model::ModelParams;
use ldl_core::seeds;
use ldl_core::synth::{generate, GeneratedData, SyntheticSpec};
use ldl_core::train::{batch_gradients, train, train_variant, LossTerms};
use ldl_core::{Model32, Scalar};
use ndarray::Array2;

fn tiny_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        classes_per_domain: vec![4, 4, 4, 4],
        samples_per_class: 8,
        latent_dim: 4,
        input_dim: 8,
        seed,
        ..SyntheticSpec::default()
    }
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        total_epochs: 4,
        decay_epochs: vec![2],
        ids_per_domain_per_batch: 2,
        images_per_id: 2,
        hidden_dim: 16,
        feature_dim: 8,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

fn data<T: Scalar>(seed: u64) -> GeneratedData<T> {
    generate(&tiny_spec(seed)).unwrap()
}

#[test]
fn fifty_adam_steps_lower_the_loss() {
    let g = data::<f64>(1);
    let mut rng = seeds::stream_rng(1, seeds::INIT);
    let mut params = ModelParams::<f64>::new(8, 16, 8, 12, &mut rng);
    let batch: Vec<usize> = (0..g.source.len()).step_by(3).collect();
    let subset = g.source.select(&batch);
    let targets = Array2::from_elem((12, 12), 1.0 / 12.0);
    let terms = LossTerms { smoothing: Some(0.1), label_rows: Some(targets.view()), lambda: 1.0, margin: 0.3 };
    let initial = batch_gradients(&params, subset.inputs.view(), &subset.class_ids, &terms).unwrap().loss.total;
    for _ in 0..50 {
        let out = batch_gradients(&params, subset.inputs.view(), &subset.class_ids, &terms).unwrap();
        params.adam_step(&out.grads, 1e-2).unwrap();
    }
    let last = batch_gradients(&params, subset.inputs.view(), &subset.class_ids, &terms).unwrap().loss.total;
    assert!(last < initial, "loss {initial} -> {last}");
}

#[test]
fn training_is_bitwise_deterministic() {
    let g = data::<f64>(2);
    for objective in [Objective::Baseline, Objective::Ldl(Redistribution::Ldl3), Objective::PinnedDistribution] {
        let a = train(&tiny_config(), objective, &g.source, &g.layout).unwrap();
        let b = train(&tiny_config(), objective, &g.source, &g.layout).unwrap();
        assert_eq!(a.params, b.params, "{objective}");
        assert_eq!(a.history, b.history, "{objective}");
    }
}

#[test]
fn history_records_every_epoch_and_diagnostics() {
    let g = data::<f64>(3);
    let config = tiny_config();
    let ldl = train(&config, Objective::Ldl(Redistribution::Ldl3), &g.source, &g.layout).unwrap();
    assert_eq!(ldl.history.epochs.len(), config.total_epochs);
    for (e, rec) in ldl.history.epochs.iter().enumerate() {
        assert_eq!(rec.epoch, e);
        assert_eq!(rec.lr, config.scheduled_lr(e));
        let d = rec.ldl.as_ref().expect("label diagnostics");
        assert_eq!(d.committed_epoch, e + 1);
        assert!(d.mass_law_residual.unwrap() < 1e-9);
        assert_eq!(d.max_same_domain_entry, 0.0);
        assert!(d.max_row_sum_error < 1e-9);
    }
    let base = train(&config, Objective::Baseline, &g.source, &g.layout).unwrap();
    assert!(base.history.epochs.iter().all(|r| r.ldl.is_none()));
    assert!(base.history.epochs.iter().all(|r| r.loss.ldl == 0.0));
}

#[test]
fn pinned_objective_drops_classification_and_pins_the_diagonal() {
    let g = data::<f64>(4);
    let out = train(&tiny_config(), Objective::PinnedDistribution, &g.source, &g.layout).unwrap();
    for rec in &out.history.epochs {
        assert_eq!(rec.loss.cls, 0.0);
        assert!((rec.ldl.as_ref().unwrap().mean_diagonal - 0.88).abs() < 1e-12);
    }
    let labels = out.engine.unwrap();
    for i in 0..labels.class_count() {
        assert_eq!(labels.labels().row(i)[i], 0.88);
    }
}

#[test]
fn objectives_share_initialization() {
    let g = data::<f64>(5);
    let config = TrainConfig { total_epochs: 1, decay_epochs: vec![], learning_rate: 1e-12, ..tiny_config() };
    let a = train(&config, Objective::Baseline, &g.source, &g.layout).unwrap();
    let b = train(&config, Objective::OneHot, &g.source, &g.layout).unwrap();
    let close = a
        .params
        .layers
        .slices()
        .iter()
        .zip(b.params.layers.slices())
        .all(|(x, y)| x.iter().zip(y.iter()).all(|(p, q)| (p - q).abs() < 1e-9));
    assert!(close, "different objectives should start from the same weights");
}

#[test]
fn onehot_compare_expands_to_two_runs() {
    let g = data::<f64>(6);
    let config =
        TrainConfig { variant: Variant::OnehotCompare, total_epochs: 1, decay_epochs: vec![], ..tiny_config() };
    let runs = train_variant(&config, &g.source, &g.layout).unwrap();
    let names: Vec<&str> = runs.iter().map(|r| r.objective.name()).collect();
    assert_eq!(names, ["onehot", "pinned-distribution"]);
}

#[test]
fn single_precision_training_runs() {
    let g = data::<f32>(7);
    let out = train(&tiny_config(), Objective::Ldl(Redistribution::Ldl3), &g.source, &g.layout).unwrap();
    let params: &Model32 = &out.params;
    assert!(params.layers.slices().iter().all(|s| s.iter().all(|v| v.is_finite())));
    let last = out.history.epochs.last().unwrap();
    assert!(last.ldl.as_ref().unwrap().mass_law_residual.unwrap() < 1e-5);
}

#[test]
fn checkpoint_roundtrip_preserves_training_state() {
    let g = data::<f64>(8);
    let out = train(&tiny_config(), Objective::Baseline, &g.source, &g.layout).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.params.save(&path).unwrap();
    let back = ModelParams::<f64>::load(&path).unwrap();
    assert_eq!(back, out.params);
}
