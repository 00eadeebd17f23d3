//! Paired ablation on the default synthetic spec.
//!
//! ```text
//! cargo run --release -p ldl-core --example ablation -- 5
//! ```

use ldl_core::config::{TrainConfig, Variant};
use ldl_core::experiment::{aggregate, objectives_of, paired_wins, run_seed, EvalOptions, RunResult};
use ldl_core::synth::SyntheticSpec;

fn main() -> ldl_core::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let spec = SyntheticSpec::default();
    let config = TrainConfig::desk();
    let objectives = objectives_of(&[Variant::Baseline, Variant::Ldl1, Variant::Ldl3, Variant::OnehotCompare]);

    let mut runs: Vec<RunResult> = Vec::new();
    for seed in 0..seeds {
        for (run, _) in run_seed::<f64>(&spec, &config, &objectives, seed, EvalOptions::default())? {
            println!(
                "seed {seed:>2}  {:<20} mAP {:.4}  rank-1 {:.4}",
                run.variant, run.target.map, run.target.cmc.rank1
            );
            runs.push(run);
        }
    }

    println!();
    for row in aggregate(&runs) {
        println!(
            "{:<20} mAP {:.4} +- {:.4}  gap ratio {:.3}",
            row.variant, row.map_mean, row.map_std, row.gap_ratio_mean
        );
    }
    let (w, n) = paired_wins(&runs, "LDL-3", "baseline", |r| r.target.map);
    println!("LDL-3 beats baseline on {w}/{n} seeds");
    let (w, n) = paired_wins(&runs, "pinned-distribution", "onehot", |r| r.target.map);
    println!("pinned-distribution beats onehot on {w}/{n} seeds");
    Ok(())
}
