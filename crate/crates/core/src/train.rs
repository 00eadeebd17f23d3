//! The training loop.
//!
//! Each iteration runs the encoder on a PK batch, combines the loss terms of
//! the chosen [`Objective`], feeds the batch's softmax outputs into the
//! tracking matrix and takes one Adam step. Each epoch ends by committing
//! the tracking matrix into the label-distribution set.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::{Objective, TrainConfig};
use crate::engine::{similarity_table, LdlEngine, Redistribution};
use crate::error::Result;
use crate::layout::DomainLayout;
use crate::losses::{self, Composition, LossBreakdown};
use crate::model::{Layers, ModelParams};
use crate::scalar::Scalar;
use crate::seeds;
use crate::synth::{Dataset, PkSampler};

/// Loss terms active for one batch.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms<'a, T> {
    /// Label smoothing of the classification term; `None` drops the term.
    pub smoothing: Option<T>,
    /// Per-class targets for the distribution term; `None` drops the term.
    pub label_rows: Option<ArrayView2<'a, T>>,
    pub lambda: T,
    pub margin: T,
}

impl<T: Scalar> LossTerms<'_, T> {
    fn composition(&self) -> Composition {
        if self.smoothing.is_some() {
            Composition::Full
        } else {
            Composition::DistributionOnly
        }
    }
}

/// Result of one forward/backward pass.
#[derive(Clone, Debug)]
pub struct BatchGradients<T> {
    pub loss: LossBreakdown<T>,
    pub grads: Layers<T>,
    /// Softmax output per sample.
    pub probs: Array2<T>,
}

/// Loss and parameter gradients of one batch.
pub fn batch_gradients<T: Scalar>(
    params: &ModelParams<T>,
    inputs: ArrayView2<'_, T>,
    labels: &[usize],
    terms: &LossTerms<'_, T>,
) -> Result<BatchGradients<T>> {
    let out = params.forward(inputs)?;
    let probs = losses::softmax_rows(out.logits.view())?;
    let n = inputs.nrows();
    let scale = T::one() / T::of_usize(n);
    let mut grad_logits = Array2::<T>::zeros(probs.raw_dim());
    let (mut cls, mut ldl) = (T::zero(), T::zero());
    for (i, &label) in labels.iter().enumerate() {
        let p = probs.row(i).to_vec();
        let mut g = grad_logits.row_mut(i);
        if let Some(eps) = terms.smoothing {
            let (l, grad) = losses::smoothed_ce_loss(&p, label, eps)?;
            cls += l;
            g.iter_mut().zip(grad).for_each(|(a, b)| *a += b * scale);
        }
        if let Some(rows) = terms.label_rows {
            let (l, grad) = losses::ldl_loss(&p, &rows.row(label).to_vec())?;
            ldl += l;
            g.iter_mut().zip(grad).for_each(|(a, b)| *a += terms.lambda * b * scale);
        }
    }
    let (tri, grad_features) = losses::batch_hard_triplet(out.features.view(), labels, terms.margin)?;
    let grads = params.backward(&out.cache, grad_logits.view(), grad_features.view())?;
    let loss = losses::overall_loss(cls * scale, tri, ldl * scale, terms.lambda, terms.composition());
    Ok(BatchGradients { loss, grads, probs })
}

/// Label-distribution state after an epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LdlDiagnostics {
    pub committed_epoch: usize,
    /// Largest |row sum - 1| over the label set.
    pub max_row_sum_error: f64,
    /// Largest same-domain off-diagonal entry of the label set.
    pub max_same_domain_entry: f64,
    pub mean_diagonal: f64,
    /// Largest deviation from the equal-attention mass law; only reported
    /// for equal-attention commits.
    pub mass_law_residual: Option<f64>,
}

/// Cross-domain similarity read from the tracking matrix, averaged over
/// classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub mean_similarity: f64,
    pub mean_diff: f64,
}

impl SimilaritySummary {
    pub fn of<T: Scalar>(engine: &LdlEngine<T>) -> Self {
        Self::from_rows(&similarity_table(engine.layout(), engine.tracking().entries()))
    }

    pub fn from_rows(rows: &[crate::engine::ClassSimilarity]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut sim = 0.0;
        let mut diff = 0.0;
        for r in rows {
            sim += r.similarities.iter().map(|s| s.1).sum::<f64>() / r.similarities.len().max(1) as f64;
            diff += r.diff;
        }
        Self { mean_similarity: sim / n, mean_diff: diff / n }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub iterations: usize,
    /// Mean over the epoch's iterations.
    pub loss: LossBreakdown<f64>,
    pub similarity: Option<SimilaritySummary>,
    pub ldl: Option<LdlDiagnostics>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub objective: String,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

/// Everything a training run produces.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub objective: Objective,
    pub params: ModelParams<T>,
    pub history: History,
    /// Present whenever the sources span at least two domains.
    pub engine: Option<LdlEngine<T>>,
}

fn diagnostics<T: Scalar>(engine: &LdlEngine<T>, equal_attention: bool) -> LdlDiagnostics {
    let layout = engine.layout();
    let labels = engine.labels().entries();
    let mut d = LdlDiagnostics { committed_epoch: engine.labels().committed_epoch(), ..Default::default() };
    let c = layout.class_count();
    for i in 0..c {
        let row = labels.row(i);
        let sum: T = row.iter().copied().sum();
        d.max_row_sum_error = d.max_row_sum_error.max((sum.as_f64() - 1.0).abs());
        d.mean_diagonal += row[i].as_f64() / c as f64;
        for &j in layout.classes_in(layout.domain_of(i)) {
            if j != i {
                d.max_same_domain_entry = d.max_same_domain_entry.max(row[j].as_f64());
            }
        }
    }
    if equal_attention {
        d.mass_law_residual = Some(engine.mass_law_residual().as_f64());
    }
    d
}

fn commit<T: Scalar>(engine: &mut LdlEngine<T>, objective: Objective, pinned: T) -> Result<()> {
    match objective {
        Objective::Ldl(r) => engine.commit_epoch(r),
        Objective::PinnedDistribution => engine.commit_epoch_pinned(pinned),
        // The label set is unused; keep it as a plain copy for inspection.
        Objective::Baseline | Objective::OneHot => engine.commit_epoch(Redistribution::Ldl1),
    }
}

/// Trains one model on the source data.
///
/// Initialization, batch order and data all derive from `config.seed`
/// through named streams, so runs with the same seed and different
/// objectives see identical batches and start from identical weights.
pub fn train<T: Scalar>(
    config: &TrainConfig,
    objective: Objective,
    data: &Dataset<T>,
    layout: &DomainLayout,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    data.check_layout(layout)?;
    let mut engine = if objective.uses_label_distribution() || layout.domain_count() >= 2 {
        Some(LdlEngine::<T>::new(layout.clone())?)
    } else {
        None
    };
    let pinned = T::of(config.pinned_diagonal);
    if objective == Objective::PinnedDistribution {
        if let Some(e) = engine.as_mut() {
            e.pin_labels(pinned)?;
        }
    }

    let mut init_rng = seeds::stream_rng(config.seed, seeds::INIT);
    let mut params = ModelParams::<T>::new(
        data.inputs.ncols(),
        config.hidden_dim,
        config.feature_dim,
        layout.class_count(),
        &mut init_rng,
    );
    let mut sampler = PkSampler::new(data, layout, config.ids_per_domain_per_batch, config.images_per_id, config.seed)?;

    let smoothing = match objective {
        Objective::Baseline | Objective::Ldl(_) => Some(T::of(config.smoothing)),
        Objective::OneHot => Some(T::zero()),
        Objective::PinnedDistribution => None,
    };
    let lambda = match objective {
        Objective::Baseline | Objective::OneHot => T::zero(),
        Objective::Ldl(_) | Objective::PinnedDistribution => T::of(config.lambda),
    };
    let momentum = T::of(config.momentum_m);
    let margin = T::of(config.margin);

    let mut history = History { objective: objective.name().to_string(), seed: config.seed, epochs: Vec::new() };
    for epoch in 0..config.total_epochs {
        let lr = config.scheduled_lr(epoch);
        let batches = sampler.next_epoch();
        let mut sum = LossBreakdown::<f64>::default();
        for batch in &batches {
            let x = data.inputs.select(ndarray::Axis(0), batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.class_ids[i]).collect();
            let label_rows =
                if objective.uses_label_distribution() { engine.as_ref().map(|e| e.labels().entries()) } else { None };
            let terms = LossTerms { smoothing, label_rows, lambda, margin };
            let step = batch_gradients(&params, x.view(), &labels, &terms)?;
            if let Some(e) = engine.as_mut() {
                let rows: Vec<Vec<T>> = step.probs.rows().into_iter().map(|r| r.to_vec()).collect();
                e.batch_update(labels.iter().copied().zip(rows.iter().map(Vec::as_slice)), momentum)?;
            }
            params.adam_step(&step.grads, T::of(lr))?;
            let l = step.loss.map(Scalar::as_f64);
            sum.cls += l.cls;
            sum.tri += l.tri;
            sum.ldl += l.ldl;
            sum.total += l.total;
        }
        let n = batches.len().max(1) as f64;
        let loss = LossBreakdown {
            cls: sum.cls / n,
            tri: sum.tri / n,
            ldl: sum.ldl / n,
            total: sum.total / n,
            lambda: lambda.as_f64(),
        };
        let mut record = EpochRecord { epoch, lr, iterations: batches.len(), loss, similarity: None, ldl: None };
        if let Some(e) = engine.as_mut() {
            commit(e, objective, pinned)?;
            record.similarity = Some(SimilaritySummary::of(e));
            if objective.uses_label_distribution() {
                let equal = matches!(objective, Objective::Ldl(Redistribution::Ldl3) | Objective::PinnedDistribution);
                record.ldl = Some(diagnostics(e, equal));
            }
        }
        history.epochs.push(record);
    }
    Ok(TrainOutcome { objective, params, history, engine })
}

/// Trains every objective of `config.variant`.
pub fn train_variant<T: Scalar>(
    config: &TrainConfig,
    data: &Dataset<T>,
    layout: &DomainLayout,
) -> Result<Vec<TrainOutcome<T>>> {
    config.variant.objectives().into_iter().map(|o| train(config, o, data, layout)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SyntheticSpec};

    fn tiny_setup() -> (TrainConfig, crate::synth::GeneratedData<f64>) {
        let spec = SyntheticSpec {
            classes_per_domain: vec![4, 4, 4, 4],
            samples_per_class: 6,
            latent_dim: 4,
            input_dim: 8,
            seed: 3,
            ..SyntheticSpec::default()
        };
        let config = TrainConfig {
            total_epochs: 4,
            decay_epochs: vec![2],
            ids_per_domain_per_batch: 3,
            images_per_id: 2,
            hidden_dim: 12,
            feature_dim: 6,
            learning_rate: 1e-2,
            seed: 3,
            ..TrainConfig::default()
        };
        (config, generate(&spec).unwrap())
    }

    #[test]
    fn baseline_history_has_no_ldl_terms() {
        let (config, g) = tiny_setup();
        let out = train(&config, Objective::Baseline, &g.source, &g.layout).unwrap();
        assert_eq!(out.history.epochs.len(), 4);
        for e in &out.history.epochs {
            assert_eq!(e.loss.ldl, 0.0);
            assert!(e.ldl.is_none());
            assert!(e.loss.cls > 0.0);
        }
        assert_eq!(out.history.epochs[2].lr, 1e-3);
    }

    #[test]
    fn same_seed_same_history() {
        let (config, g) = tiny_setup();
        let a = train(&config, Objective::Ldl(Redistribution::Ldl3), &g.source, &g.layout).unwrap();
        let b = train(&config, Objective::Ldl(Redistribution::Ldl3), &g.source, &g.layout).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn ldl3_keeps_label_set_consistent() {
        let (config, g) = tiny_setup();
        let out = train(&config, Objective::Ldl(Redistribution::Ldl3), &g.source, &g.layout).unwrap();
        for e in &out.history.epochs {
            let d = e.ldl.as_ref().unwrap();
            assert!(d.max_row_sum_error < 1e-9);
            assert_eq!(d.max_same_domain_entry, 0.0);
            assert!(d.mass_law_residual.unwrap() < 1e-9);
            assert_eq!(d.committed_epoch, e.epoch + 1);
        }
    }

    #[test]
    fn first_epoch_targets_uniform_rows() {
        let (config, g) = tiny_setup();
        let engine = LdlEngine::<f64>::new(g.layout.clone()).unwrap();
        let c = g.layout.class_count() as f64;
        assert!(engine.labels().entries().iter().all(|&v| v == 1.0 / c));
        // With a single epoch no commit has influenced the loss yet: the
        // distribution term equals cross entropy against the uniform row.
        let one = TrainConfig { total_epochs: 1, decay_epochs: vec![], ..config };
        let out = train(&one, Objective::Ldl(Redistribution::Ldl3), &g.source, &g.layout).unwrap();
        assert!(out.history.epochs[0].loss.ldl >= c.ln() - 1e-12);
    }

    #[test]
    fn pinned_run_drops_classification() {
        let (config, g) = tiny_setup();
        let out = train(&config, Objective::PinnedDistribution, &g.source, &g.layout).unwrap();
        let engine = out.engine.unwrap();
        for i in 0..g.layout.class_count() {
            assert_eq!(engine.labels().row(i)[i], 0.88);
        }
        assert!(out.history.epochs.iter().all(|e| e.loss.cls == 0.0));
        let outs = train_variant(
            &TrainConfig { variant: crate::config::Variant::OnehotCompare, ..config },
            &g.source,
            &g.layout,
        )
        .unwrap();
        assert_eq!(outs.len(), 2);
        assert_eq!(outs[0].objective, Objective::OneHot);
    }

    #[test]
    fn single_domain_baseline_runs_without_engine() {
        let (config, g) = tiny_setup();
        let d0 = g.source.domain_subset(0);
        let layout = DomainLayout::contiguous(&[4]).unwrap();
        let out = train(&config, Objective::Baseline, &d0, &layout).unwrap();
        assert!(out.engine.is_none());
        assert!(train(&config, Objective::Ldl(Redistribution::Ldl3), &d0, &layout).is_err());
    }
}
