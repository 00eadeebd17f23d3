use std::fmt::Write as _;

use anyhow::{bail, ensure, Context, Result};
use ldl_core::config::{Objective, TrainConfig};
use ldl_core::engine::Redistribution;
use ldl_core::experiment::{aggregate, evaluate_model, objectives_of, run_seed, EvalOptions, RunResult};
use ldl_core::snapshot::MatrixSnapshot;
use ldl_core::synth::{generate, DatasetManifest, GeneratedData};
use ldl_core::{train, Data, Model};

use crate::artifacts::*;
use crate::settings::{ExperimentConfig, SweepParam};

fn eval_options(cfg: &ExperimentConfig) -> EvalOptions {
    EvalOptions { metric: cfg.metric, source_eval: cfg.source_eval }
}

pub fn generate_data(cfg: &ExperimentConfig, force: bool) -> Result<()> {
    let out = Layout::new(&cfg.output_dir);
    let existing: Vec<_> =
        [out.manifest(), out.source_csv(), out.target_csv()].into_iter().filter(|p| p.exists()).collect();
    if !existing.is_empty() && !force {
        bail!("{} already exists; pass --force to overwrite", existing[0].display());
    }
    let data = generate::<f64>(&cfg.spec)?;
    create_dir(&out.data_dir())?;
    data.source.save_csv(&out.source_csv())?;
    data.target.save_csv(&out.target_csv())?;
    let manifest = ManifestFile {
        format: ManifestFile::FORMAT.into(),
        generated_at_unix: timestamp(),
        manifest: DatasetManifest::describe(&cfg.spec, &data),
    };
    write_json(&out.manifest(), &manifest)?;
    println!(
        "generated {} source samples ({} classes over {} domains) and {} target samples ({} classes) in {}",
        data.source.len(),
        data.layout.class_count(),
        data.layout.domain_count(),
        data.target.len(),
        manifest.manifest.target_classes,
        out.data_dir().display()
    );
    Ok(())
}

/// Reads the generated dataset back and checks it against its manifest.
pub fn load_data(out: &Layout) -> Result<GeneratedData<f64>> {
    ensure!(out.manifest().exists(), "no dataset at {}; run `ldl generate` first", out.data_dir().display());
    let manifest: ManifestFile = read_json(&out.manifest())?;
    let source = Data::load_csv(&out.source_csv())?;
    let target = Data::load_csv(&out.target_csv())?;
    let layout = manifest.manifest.layout;
    source.check_layout(&layout).context("source data does not match the manifest layout")?;
    ensure!(
        source.len() == manifest.manifest.source_samples && target.len() == manifest.manifest.target_samples,
        "sample counts differ from the manifest"
    );
    ensure!(target.class_set().is_disjoint(&source.class_set()), "target classes overlap source classes");
    Ok(GeneratedData { source, layout, target })
}

pub fn train_runs(cfg: &ExperimentConfig) -> Result<()> {
    let out = Layout::new(&cfg.output_dir);
    let data = load_data(&out)?;
    for seed in cfg.seeds() {
        let config = TrainConfig { seed, ..cfg.train.clone() };
        for objective in objectives_of(&cfg.variants) {
            let outcome = train(&config, objective, &data.source, &data.layout)?;
            let dir = out.run_dir(objective.name(), seed);
            create_dir(&dir)?;
            outcome.params.save(&dir.join("checkpoint.json"))?;
            let history = HistoryFile {
                format: HistoryFile::FORMAT.into(),
                format_version: FORMAT_VERSION,
                generated_at_unix: timestamp(),
                objective: objective.name().into(),
                seed,
                config: config.clone(),
                epochs: outcome.history.epochs.clone(),
            };
            write_json(&dir.join("history.json"), &history)?;
            if let Some(engine) = &outcome.engine {
                MatrixSnapshot::of_tracking(engine).save(&dir.join("tracking.csv"))?;
                MatrixSnapshot::of_labels(engine).save(&dir.join("labels.csv"))?;
            }
            let last = outcome.history.epochs.last().map_or(f64::NAN, |e| e.loss.total);
            println!("trained {:<20} seed {seed}: final epoch loss {last:.4} -> {}", objective.name(), dir.display());
        }
    }
    Ok(())
}

pub fn evaluate_runs(cfg: &ExperimentConfig) -> Result<()> {
    let out = Layout::new(&cfg.output_dir);
    let data = load_data(&out)?;
    for seed in cfg.seeds() {
        for objective in objectives_of(&cfg.variants) {
            let dir = out.run_dir(objective.name(), seed);
            let checkpoint = dir.join("checkpoint.json");
            ensure!(checkpoint.exists(), "no checkpoint at {}; run `ldl train` first", checkpoint.display());
            let params = Model::load(&checkpoint)?;
            let (target, sources) = evaluate_model(&params, &data, objective.name(), seed, eval_options(cfg))?;
            let eval_dir = dir.join("eval");
            create_dir(&eval_dir)?;
            target.save(&eval_dir.join("target.json"))?;
            for report in &sources {
                report.save(&eval_dir.join(format!("{}.json", report.scope)))?;
            }
            println!(
                "{:<20} seed {seed}: target mAP {:.4} rank-1 {:.4} rank-5 {:.4} rank-10 {:.4} gap ratio {:.4}",
                objective.name(),
                target.map,
                target.cmc.rank1,
                target.cmc.rank5,
                target.cmc.rank10,
                target.gap_ratio
            );
            for s in &sources {
                println!("{:<20} seed {seed}: {} mAP {:.4} rank-1 {:.4}", "", s.scope, s.map, s.cmc.rank1);
            }
        }
    }
    Ok(())
}

fn run_all(cfg: &ExperimentConfig, train: &TrainConfig, objectives: &[Objective]) -> Result<Vec<RunResult>> {
    let options = EvalOptions { source_eval: false, ..eval_options(cfg) };
    let mut runs = Vec::new();
    for seed in cfg.seeds() {
        for (run, _) in run_seed::<f64>(&cfg.spec, train, objectives, seed, options)? {
            runs.push(run);
        }
    }
    Ok(runs)
}

pub fn ablate(cfg: &ExperimentConfig) -> Result<()> {
    let out = Layout::new(&cfg.output_dir);
    let objectives = objectives_of(&cfg.variants);
    let runs = run_all(cfg, &cfg.train, &objectives)?;
    let rows: Vec<RunRow> = runs.iter().map(RunRow::of).collect();
    let aggregate = aggregate(&runs);
    let compared = [Objective::Baseline.name(), Redistribution::Ldl3.name()];
    let similarity: Vec<SimilarityRow> =
        runs.iter().filter(|r| compared.contains(&r.variant.as_str())).flat_map(SimilarityRow::of).collect();
    let dir = out.ablation_dir();
    create_dir(&dir)?;
    write_runs_csv(&dir.join("runs.csv"), &rows)?;
    write_aggregate_csv(&dir.join("summary.csv"), &aggregate)?;
    write_similarity_csv(&dir.join("similarity.csv"), &similarity)?;
    let file = AblationFile {
        format: AblationFile::FORMAT.into(),
        format_version: FORMAT_VERSION,
        generated_at_unix: timestamp(),
        spec: cfg.spec.clone(),
        train: cfg.train.clone(),
        seeds: cfg.seeds(),
        runs: rows,
        aggregate,
        similarity,
    };
    write_json(&dir.join("ablation.json"), &file)?;
    print!("{}", summary_table(&file.aggregate));
    println!("wrote {}", dir.display());
    Ok(())
}

/// Label-distribution objectives of the configured variants, or LDL-3 when
/// none is selected.
fn sweep_objectives(cfg: &ExperimentConfig) -> Vec<Objective> {
    let chosen: Vec<Objective> =
        objectives_of(&cfg.variants).into_iter().filter(|o| o.uses_label_distribution()).collect();
    if chosen.is_empty() {
        vec![Objective::Ldl(Redistribution::Ldl3)]
    } else {
        chosen
    }
}

pub fn sweep(cfg: &ExperimentConfig, param: SweepParam) -> Result<()> {
    let out = Layout::new(&cfg.output_dir);
    let values = cfg.sweep_values(param).to_vec();
    ensure!(!values.is_empty(), "no values to sweep for {}", param.name());
    let objectives = sweep_objectives(cfg);
    let mut rows = Vec::new();
    let mut aggregates = Vec::new();
    for &value in &values {
        let mut train = cfg.train.clone();
        param.apply(&mut train, value);
        train.validate()?;
        let runs = run_all(cfg, &train, &objectives)?;
        rows.extend(runs.iter().map(|r| SweepRow { value, run: RunRow::of(r) }));
        aggregates.extend(aggregate(&runs).into_iter().map(|a| SweepAggregate { value, aggregate: a }));
    }
    let file = SweepFile {
        format: SweepFile::FORMAT.into(),
        format_version: FORMAT_VERSION,
        generated_at_unix: timestamp(),
        parameter: param.name().into(),
        values,
        spec: cfg.spec.clone(),
        train: cfg.train.clone(),
        seeds: cfg.seeds(),
        runs: rows,
        aggregate: aggregates,
    };
    let dir = out.sweep_dir();
    create_dir(&dir)?;
    write_sweep_csv(&dir.join(format!("{}.csv", param.name())), param.name(), &file)?;
    write_json(&dir.join(format!("{}.json", param.name())), &file)?;
    println!("{:<8} {:<20} {:>8} {:>8} {:>9}", param.name(), "variant", "mAP", "std", "gap ratio");
    for a in &file.aggregate {
        let r = &a.aggregate;
        println!("{:<8} {:<20} {:>8.4} {:>8.4} {:>9.4}", a.value, r.variant, r.map_mean, r.map_std, r.gap_ratio_mean);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn summary_table(rows: &[ldl_core::experiment::AggregateRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| variant | runs | mAP | rank-1 | gap ratio | similarity | Diff |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|");
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.5}"));
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} ± {:.4} | {} | {} |",
            r.variant,
            r.runs,
            r.map_mean,
            r.map_std,
            r.rank1_mean,
            r.rank1_std,
            r.gap_ratio_mean,
            r.gap_ratio_std,
            opt(r.similarity_mean),
            opt(r.diff_mean)
        );
    }
    s
}

/// Similarities, Diff sum and count per variant.
type ClassAccumulator<'a> = std::collections::BTreeMap<&'a str, (Vec<f64>, f64, usize)>;

/// Per-class similarities averaged over seeds, baseline next to LDL-3.
fn similarity_section(rows: &[SimilarityRow]) -> String {
    use std::collections::BTreeMap;
    let mut by_class: BTreeMap<(usize, usize), ClassAccumulator> = BTreeMap::new();
    for r in rows {
        let slot = by_class
            .entry((r.class, r.domain))
            .or_default()
            .entry(r.variant.as_str())
            .or_insert_with(|| (vec![0.0; r.similarities.len()], 0.0, 0));
        slot.0.iter_mut().zip(&r.similarities).for_each(|(a, b)| *a += b);
        slot.1 += r.diff;
        slot.2 += 1;
    }
    let width = rows.iter().map(|r| r.similarities.len()).max().unwrap_or(0);
    let variants = [Objective::Baseline.name(), Redistribution::Ldl3.name()];
    let mut s = String::new();
    let mut header = "| class | domain |".to_string();
    let mut rule = "|---|---|".to_string();
    for v in variants {
        for k in 1..=width {
            let _ = write!(header, " {v} OD-{k} |");
            rule.push_str("---|");
        }
        let _ = write!(header, " {v} Diff |");
        rule.push_str("---|");
    }
    let _ = writeln!(s, "{header}\n{rule}");
    for ((class, domain), per_variant) in &by_class {
        let mut line = format!("| {class} | {domain} |");
        for v in variants {
            match per_variant.get(v) {
                Some((sims, diff, n)) => {
                    let n = *n as f64;
                    for x in sims {
                        let _ = write!(line, " {:.5} |", x / n);
                    }
                    let _ = write!(line, " {:.5} |", diff / n);
                }
                None => line.push_str(&" - |".repeat(width + 1)),
            }
        }
        let _ = writeln!(s, "{line}");
    }
    s
}

pub fn report(cfg: &ExperimentConfig) -> Result<()> {
    let out = Layout::new(&cfg.output_dir);
    let mut text = String::from("# LDL experiment report\n");
    let mut sections = 0;

    let ablation_path = out.ablation_dir().join("ablation.json");
    if ablation_path.exists() {
        let file: AblationFile = read_json(&ablation_path)?;
        let seeds: Vec<String> = file.seeds.iter().map(u64::to_string).collect();
        let _ = write!(
            text,
            "\n## Ablation\n\nSeeds: {}. Target-domain retrieval, mean ± std over seeds.\n\n",
            seeds.join(", ")
        );
        text.push_str(&summary_table(&file.aggregate));
        if !file.similarity.is_empty() {
            text.push_str("\n## Cross-domain similarity\n\nMean over seeds, read from the tracking matrix after training. OD-k is the k-th other domain.\n\n");
            text.push_str(&similarity_section(&file.similarity));
        }
        sections += 1;
    }

    for param in [SweepParam::Momentum, SweepParam::Lambda] {
        let path = out.sweep_dir().join(format!("{}.json", param.name()));
        if path.exists() {
            let file: SweepFile = read_json(&path)?;
            let _ = write!(
                text,
                "\n## Sweep over {}\n\n| {} | variant | mAP | rank-1 | gap ratio |\n|---|---|---|---|---|\n",
                file.parameter, file.parameter
            );
            for a in &file.aggregate {
                let r = &a.aggregate;
                let _ = writeln!(
                    text,
                    "| {} | {} | {:.4} ± {:.4} | {:.4} ± {:.4} | {:.4} |",
                    a.value, r.variant, r.map_mean, r.map_std, r.rank1_mean, r.rank1_std, r.gap_ratio_mean
                );
            }
            sections += 1;
        }
    }

    let mut evals = Vec::new();
    for seed in cfg.seeds() {
        for objective in objectives_of(&cfg.variants) {
            let path = out.run_dir(objective.name(), seed).join("eval").join("target.json");
            if path.exists() {
                evals.push(ldl_core::eval::EvalReport::load(&path)?);
            }
        }
    }
    if !evals.is_empty() {
        text.push_str("\n## Evaluated checkpoints\n\n| variant | seed | mAP | rank-1 | rank-5 | rank-10 | gap ratio |\n|---|---|---|---|---|---|---|\n");
        for e in &evals {
            let _ = writeln!(
                text,
                "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
                e.variant, e.seed, e.map, e.cmc.rank1, e.cmc.rank5, e.cmc.rank10, e.gap_ratio
            );
        }
        sections += 1;
    }

    ensure!(sections > 0, "nothing to report in {}; run ablate or eval first", out.root.display());
    std::fs::write(out.report(), &text).with_context(|| format!("writing {}", out.report().display()))?;
    print!("{text}");
    Ok(())
}
