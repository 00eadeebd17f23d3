//! Paired multi-seed experiments: generate data, train each objective,
//! evaluate on the held-out domain, aggregate.

use serde::{Deserialize, Serialize};

use crate::config::{Objective, TrainConfig, Variant};
use crate::engine::ClassSimilarity;
use crate::error::Result;
use crate::eval::{domain_gap, evaluate_split, EvalReport, Metric};
use crate::model::ModelParams;
use crate::scalar::Scalar;
use crate::synth::{generate, Dataset, GeneratedData, SyntheticSpec};
use crate::train::{train, History, SimilaritySummary, TrainOutcome};

/// Evaluation options shared by every run of an experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub metric: Metric,
    /// Also report retrieval on each source domain.
    pub source_eval: bool,
}

/// Evaluation of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: String,
    pub seed: u64,
    pub target: EvalReport,
    pub sources: Vec<EvalReport>,
    pub similarity: Option<SimilaritySummary>,
    pub similarity_table: Vec<ClassSimilarity>,
}

/// Seed used for the data of repeat `r` under a root seed.
pub fn repeat_seed(root: u64, repeat: usize) -> u64 {
    root.wrapping_add(repeat as u64)
}

/// Target (and optionally per-source) reports for a trained model.
pub fn evaluate_model<T: Scalar>(
    params: &ModelParams<T>,
    data: &GeneratedData<T>,
    variant: &str,
    seed: u64,
    options: EvalOptions,
) -> Result<(EvalReport, Vec<EvalReport>)> {
    let source_features = params.embed(data.source.inputs.view())?;
    let gap = domain_gap(source_features.view(), &data.source.domain_ids, &data.source.class_ids)?;
    let report = |scope: String, subset: &Dataset<T>| -> Result<EvalReport> {
        let features = params.embed(subset.inputs.view())?;
        let scores = evaluate_split(features.view(), subset, options.metric)?;
        Ok(EvalReport::new(
            scope,
            variant,
            seed,
            options.metric,
            scores,
            gap,
            &subset.view_ids,
            subset.class_set().into_iter().collect(),
        ))
    };
    let target = report("target".into(), &data.target)?;
    let mut sources = Vec::new();
    if options.source_eval {
        for d in 0..data.layout.domain_count() {
            sources.push(report(format!("source-{d}"), &data.source.domain_subset(d))?);
        }
    }
    Ok((target, sources))
}

/// Converts a finished training run into a [`RunResult`].
pub fn summarize_run<T: Scalar>(
    outcome: &TrainOutcome<T>,
    data: &GeneratedData<T>,
    seed: u64,
    options: EvalOptions,
) -> Result<RunResult> {
    let name = outcome.objective.name();
    let (target, sources) = evaluate_model(&outcome.params, data, name, seed, options)?;
    let (similarity, similarity_table) = match &outcome.engine {
        Some(e) => (Some(SimilaritySummary::of(e)), e.similarity_report()),
        None => (None, Vec::new()),
    };
    Ok(RunResult { variant: name.to_string(), seed, target, sources, similarity, similarity_table })
}

/// Trains and evaluates every objective on one seed's data. All objectives
/// share the data, initialization and batch order.
pub fn run_seed<T: Scalar>(
    spec: &SyntheticSpec,
    config: &TrainConfig,
    objectives: &[Objective],
    seed: u64,
    options: EvalOptions,
) -> Result<Vec<(RunResult, History)>> {
    let spec = SyntheticSpec { seed, ..spec.clone() };
    let config = TrainConfig { seed, ..config.clone() };
    let data = generate::<T>(&spec)?;
    objectives
        .iter()
        .map(|&o| {
            let outcome = train(&config, o, &data.source, &data.layout)?;
            Ok((summarize_run(&outcome, &data, seed, options)?, outcome.history))
        })
        .collect()
}

/// Expands variants into their objectives, keeping order and dropping
/// duplicates.
pub fn objectives_of(variants: &[Variant]) -> Vec<Objective> {
    let mut out = Vec::new();
    for v in variants {
        for o in v.objectives() {
            if !out.contains(&o) {
                out.push(o);
            }
        }
    }
    out
}

/// Mean and sample standard deviation per variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub runs: usize,
    pub map_mean: f64,
    pub map_std: f64,
    pub rank1_mean: f64,
    pub rank1_std: f64,
    pub gap_ratio_mean: f64,
    pub gap_ratio_std: f64,
    pub similarity_mean: Option<f64>,
    pub diff_mean: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Aggregates runs per variant, in order of first appearance.
pub fn aggregate(runs: &[RunResult]) -> Vec<AggregateRow> {
    let mut names: Vec<&str> = Vec::new();
    for r in runs {
        if !names.contains(&r.variant.as_str()) {
            names.push(&r.variant);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let group: Vec<&RunResult> = runs.iter().filter(|r| r.variant == name).collect();
            let col = |f: &dyn Fn(&RunResult) -> f64| mean_std(&group.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (map_mean, map_std) = col(&|r| r.target.map);
            let (rank1_mean, rank1_std) = col(&|r| r.target.cmc.rank1);
            let (gap_ratio_mean, gap_ratio_std) = col(&|r| r.target.gap_ratio);
            let sims: Vec<&SimilaritySummary> = group.iter().filter_map(|r| r.similarity.as_ref()).collect();
            let (similarity_mean, diff_mean) = if sims.is_empty() {
                (None, None)
            } else {
                let n = sims.len() as f64;
                (
                    Some(sims.iter().map(|s| s.mean_similarity).sum::<f64>() / n),
                    Some(sims.iter().map(|s| s.mean_diff).sum::<f64>() / n),
                )
            };
            AggregateRow {
                variant: name.to_string(),
                runs: group.len(),
                map_mean,
                map_std,
                rank1_mean,
                rank1_std,
                gap_ratio_mean,
                gap_ratio_std,
                similarity_mean,
                diff_mean,
            }
        })
        .collect()
}

/// Number of seeds on which `better` strictly beats `worse` under `metric`
/// (paired by seed), and the number of seeds both were run on.
pub fn paired_wins(
    runs: &[RunResult],
    better: &str,
    worse: &str,
    metric: impl Fn(&RunResult) -> f64,
) -> (usize, usize) {
    let mut wins = 0;
    let mut total = 0;
    for a in runs.iter().filter(|r| r.variant == better) {
        if let Some(b) = runs.iter().find(|r| r.variant == worse && r.seed == a.seed) {
            total += 1;
            if metric(a) > metric(b) {
                wins += 1;
            }
        }
    }
    (wins, total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Redistribution;

    #[test]
    fn mean_std_basic() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn objectives_deduplicate() {
        let o = objectives_of(&[Variant::Ldl3, Variant::Baseline, Variant::Ldl3, Variant::OnehotCompare]);
        assert_eq!(
            o,
            vec![
                Objective::Ldl(Redistribution::Ldl3),
                Objective::Baseline,
                Objective::OneHot,
                Objective::PinnedDistribution
            ]
        );
    }

    #[test]
    fn tiny_paired_run() {
        let spec = SyntheticSpec {
            classes_per_domain: vec![4, 4, 4, 4],
            samples_per_class: 8,
            latent_dim: 4,
            input_dim: 8,
            ..SyntheticSpec::default()
        };
        let config = TrainConfig {
            total_epochs: 3,
            decay_epochs: vec![],
            ids_per_domain_per_batch: 2,
            images_per_id: 2,
            hidden_dim: 8,
            feature_dim: 4,
            ..TrainConfig::default()
        };
        let options = EvalOptions { source_eval: true, ..Default::default() };
        let objectives = [Objective::Baseline, Objective::Ldl(Redistribution::Ldl3)];
        let runs = run_seed::<f64>(&spec, &config, &objectives, 5, options).unwrap();
        assert_eq!(runs.len(), 2);
        let results: Vec<RunResult> = runs.into_iter().map(|r| r.0).collect();
        for r in &results {
            assert_eq!(r.sources.len(), 3);
            assert!(r.target.evaluated_classes.iter().all(|&c| c >= 12));
            assert!((0.0..=1.0).contains(&r.target.map));
            assert!(r.target.cmc.rank1 <= r.target.cmc.rank5 && r.target.cmc.rank5 <= r.target.cmc.rank10);
        }
        let agg = aggregate(&results);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].runs, 1);
        let (_, total) = paired_wins(&results, "LDL-3", "baseline", |r| r.target.map);
        assert_eq!(total, 1);
    }
}
