//! On-disk outputs: directory layout, JSON envelopes and CSV tables.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ldl_core::config::TrainConfig;
use ldl_core::experiment::{AggregateRow, RunResult};
use ldl_core::synth::DatasetManifest;
use ldl_core::train::EpochRecord;
use ldl_core::SyntheticSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set. This is the
/// only time-dependent value in any output.
pub fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()).unwrap_or_else(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
    })
}

/// Paths under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn source_csv(&self) -> PathBuf {
        self.data_dir().join("source.csv")
    }

    pub fn target_csv(&self) -> PathBuf {
        self.data_dir().join("target.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.data_dir().join("manifest.json")
    }

    pub fn run_dir(&self, objective: &str, seed: u64) -> PathBuf {
        self.root.join("runs").join(objective).join(format!("seed-{seed}"))
    }

    pub fn ablation_dir(&self) -> PathBuf {
        self.root.join("ablation")
    }

    pub fn sweep_dir(&self) -> PathBuf {
        self.root.join("sweep")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.md")
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Dataset manifest with the generation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub format: String,
    pub generated_at_unix: u64,
    #[serde(flatten)]
    pub manifest: DatasetManifest,
}

impl ManifestFile {
    pub const FORMAT: &str = "ldl-dataset";
}

/// Per-epoch training record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryFile {
    pub format: String,
    pub format_version: u32,
    pub generated_at_unix: u64,
    pub objective: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
}

impl HistoryFile {
    pub const FORMAT: &str = "ldl-history";
}

/// One (variant, seed) result of an ablation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub variant: String,
    pub seed: u64,
    pub map: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
    pub gap_between: f64,
    pub gap_within: f64,
    pub gap_ratio: f64,
    pub mean_similarity: Option<f64>,
    pub mean_diff: Option<f64>,
}

impl RunRow {
    pub fn of(r: &RunResult) -> Self {
        Self {
            variant: r.variant.clone(),
            seed: r.seed,
            map: r.target.map,
            rank1: r.target.cmc.rank1,
            rank5: r.target.cmc.rank5,
            rank10: r.target.cmc.rank10,
            gap_between: r.target.gap_between,
            gap_within: r.target.gap_within,
            gap_ratio: r.target.gap_ratio,
            mean_similarity: r.similarity.map(|s| s.mean_similarity),
            mean_diff: r.similarity.map(|s| s.mean_diff),
        }
    }
}

/// Similarity of one class to each other domain, read from the tracking
/// matrix at the end of training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub variant: String,
    pub seed: u64,
    pub class: usize,
    pub domain: usize,
    /// Other domains in ascending order.
    pub other_domains: Vec<usize>,
    pub similarities: Vec<f64>,
    pub diff: f64,
}

impl SimilarityRow {
    pub fn of(r: &RunResult) -> Vec<Self> {
        r.similarity_table
            .iter()
            .map(|c| SimilarityRow {
                variant: r.variant.clone(),
                seed: r.seed,
                class: c.class,
                domain: c.domain,
                other_domains: c.similarities.iter().map(|s| s.0).collect(),
                similarities: c.similarities.iter().map(|s| s.1).collect(),
                diff: c.diff,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationFile {
    pub format: String,
    pub format_version: u32,
    pub generated_at_unix: u64,
    pub spec: SyntheticSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRow>,
    pub aggregate: Vec<AggregateRow>,
    /// Baseline and LDL-3 only.
    pub similarity: Vec<SimilarityRow>,
}

impl AblationFile {
    pub const FORMAT: &str = "ldl-ablation";
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(flatten)]
    pub run: RunRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub value: f64,
    #[serde(flatten)]
    pub aggregate: AggregateRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub format: String,
    pub format_version: u32,
    pub generated_at_unix: u64,
    pub parameter: String,
    pub values: Vec<f64>,
    pub spec: SyntheticSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub runs: Vec<SweepRow>,
    pub aggregate: Vec<SweepAggregate>,
}

impl SweepFile {
    pub const FORMAT: &str = "ldl-sweep";
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub const RUN_HEADER: [&str; 11] = [
    "variant",
    "seed",
    "map",
    "rank1",
    "rank5",
    "rank10",
    "gap_between",
    "gap_within",
    "gap_ratio",
    "mean_similarity",
    "mean_diff",
];

fn run_fields(r: &RunRow) -> Vec<String> {
    vec![
        r.variant.clone(),
        r.seed.to_string(),
        r.map.to_string(),
        r.rank1.to_string(),
        r.rank5.to_string(),
        r.rank10.to_string(),
        r.gap_between.to_string(),
        r.gap_within.to_string(),
        r.gap_ratio.to_string(),
        opt(r.mean_similarity),
        opt(r.mean_diff),
    ]
}

pub const AGGREGATE_HEADER: [&str; 10] = [
    "variant",
    "runs",
    "map_mean",
    "map_std",
    "rank1_mean",
    "rank1_std",
    "gap_ratio_mean",
    "gap_ratio_std",
    "similarity_mean",
    "diff_mean",
];

fn aggregate_fields(a: &AggregateRow) -> Vec<String> {
    vec![
        a.variant.clone(),
        a.runs.to_string(),
        a.map_mean.to_string(),
        a.map_std.to_string(),
        a.rank1_mean.to_string(),
        a.rank1_std.to_string(),
        a.gap_ratio_mean.to_string(),
        a.gap_ratio_std.to_string(),
        opt(a.similarity_mean),
        opt(a.diff_mean),
    ]
}

fn write_csv(path: &Path, header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn owned(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

pub fn write_runs_csv(path: &Path, runs: &[RunRow]) -> Result<()> {
    write_csv(path, owned(&RUN_HEADER), runs.iter().map(run_fields))
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_csv(path, owned(&AGGREGATE_HEADER), rows.iter().map(aggregate_fields))
}

/// Columns `variant,seed,class,domain,od_1..od_{K-1},diff`.
pub fn write_similarity_csv(path: &Path, rows: &[SimilarityRow]) -> Result<()> {
    let width = rows.iter().map(|r| r.similarities.len()).max().unwrap_or(0);
    let mut header = owned(&["variant", "seed", "class", "domain"]);
    header.extend((1..=width).map(|k| format!("od_{k}")));
    header.push("diff".into());
    write_csv(
        path,
        header,
        rows.iter().map(|r| {
            let mut f = vec![r.variant.clone(), r.seed.to_string(), r.class.to_string(), r.domain.to_string()];
            f.extend(r.similarities.iter().map(|s| s.to_string()));
            f.push(r.diff.to_string());
            f
        }),
    )
}

pub fn write_sweep_csv(path: &Path, parameter: &str, sweep: &SweepFile) -> Result<()> {
    let mut header = vec!["row".to_string(), parameter.to_string()];
    header.extend(owned(&RUN_HEADER));
    header.extend(owned(&AGGREGATE_HEADER[1..]));
    let blank_aggregate = AGGREGATE_HEADER.len() - 1;
    let blank_run = RUN_HEADER.len() - 1;
    let runs = sweep.runs.iter().map(|r| {
        let mut f = vec!["run".to_string(), r.value.to_string()];
        f.extend(run_fields(&r.run));
        f.extend(std::iter::repeat_n(String::new(), blank_aggregate));
        f
    });
    let aggregates = sweep.aggregate.iter().map(|a| {
        let fields = aggregate_fields(&a.aggregate);
        let mut f = vec!["aggregate".to_string(), a.value.to_string(), fields[0].clone()];
        f.extend(std::iter::repeat_n(String::new(), blank_run));
        f.extend(fields[1..].iter().cloned());
        f
    });
    write_csv(path, header, runs.chain(aggregates))
}
