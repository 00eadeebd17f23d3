//! Training configuration, experiment variants and the learning-rate schedule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::Redistribution;
use crate::error::{LdlError, Result};

/// Experiment variant as named on the command line and in reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "LDL-1")]
    Ldl1,
    #[serde(rename = "LDL-2")]
    Ldl2,
    #[serde(rename = "LDL-3")]
    Ldl3,
    /// One-hot classification against pinned-diagonal distributions; runs
    /// two training arms.
    #[serde(rename = "onehot-compare")]
    OnehotCompare,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Self::Baseline, Self::Ldl1, Self::Ldl2, Self::Ldl3, Self::OnehotCompare];

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Ldl1 => "LDL-1",
            Self::Ldl2 => "LDL-2",
            Self::Ldl3 => "LDL-3",
            Self::OnehotCompare => "onehot-compare",
        }
    }

    /// Training runs this variant expands into.
    pub fn objectives(self) -> Vec<Objective> {
        match self {
            Self::Baseline => vec![Objective::Baseline],
            Self::Ldl1 => vec![Objective::Ldl(Redistribution::Ldl1)],
            Self::Ldl2 => vec![Objective::Ldl(Redistribution::Ldl2)],
            Self::Ldl3 => vec![Objective::Ldl(Redistribution::Ldl3)],
            Self::OnehotCompare => vec![Objective::OneHot, Objective::PinnedDistribution],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s)).ok_or_else(|| {
            format!("unknown variant {s:?} (expected one of baseline, LDL-1, LDL-2, LDL-3, onehot-compare)")
        })
    }
}

/// What a single training run optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Smoothed cross entropy plus triplet.
    Baseline,
    /// Baseline plus `lambda` times the distribution loss against the
    /// committed label set.
    Ldl(Redistribution),
    /// Unsmoothed cross entropy plus triplet.
    OneHot,
    /// Triplet plus distribution loss against pinned-diagonal targets, with
    /// no classification term.
    PinnedDistribution,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Ldl(r) => r.name(),
            Self::OneHot => "onehot",
            Self::PinnedDistribution => "pinned-distribution",
        }
    }

    pub fn uses_label_distribution(self) -> bool {
        matches!(self, Self::Ldl(_) | Self::PinnedDistribution)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "onehot" => Ok(Self::OneHot),
            "pinned-distribution" => Ok(Self::PinnedDistribution),
            other => other.parse::<Redistribution>().map(Self::Ldl),
        }
    }
}

/// Optimizer, schedule, batching and loss settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub total_epochs: usize,
    pub momentum_m: f64,
    pub lambda: f64,
    pub ids_per_domain_per_batch: usize,
    pub images_per_id: usize,
    pub seed: u64,
    pub variant: Variant,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub margin: f64,
    pub smoothing: f64,
    pub pinned_diagonal: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3.5e-4,
            decay_epochs: vec![30, 50],
            decay_factor: 0.1,
            total_epochs: 60,
            momentum_m: 0.2,
            lambda: 1.0,
            ids_per_domain_per_batch: 16,
            images_per_id: 4,
            seed: 0,
            variant: Variant::Ldl3,
            hidden_dim: 128,
            feature_dim: 64,
            margin: 0.3,
            smoothing: 0.1,
            pinned_diagonal: 0.88,
        }
    }
}

impl TrainConfig {
    /// Settings sized for the default synthetic spec: same schedule shape,
    /// momentum and loss weights, but a larger base rate and 8 x 4 batches
    /// so the small source set yields enough optimizer steps.
    pub fn desk() -> Self {
        Self { learning_rate: 1e-3, ids_per_domain_per_batch: 8, images_per_id: 4, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LdlError::InvalidConfig(m));
        if self.total_epochs == 0 {
            return bad("total_epochs must be positive".into());
        }
        if !self.decay_epochs.windows(2).all(|w| w[0] < w[1]) {
            return bad(format!("decay_epochs {:?} not strictly increasing", self.decay_epochs));
        }
        if self.decay_epochs.last().is_some_and(|&e| e >= self.total_epochs) {
            return bad(format!(
                "decay_epochs {:?} must be below total_epochs {}",
                self.decay_epochs, self.total_epochs
            ));
        }
        for (name, v) in
            [("learning_rate", self.learning_rate), ("decay_factor", self.decay_factor), ("margin", self.margin)]
        {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.momentum_m) {
            return bad(format!("momentum_m {} outside [0, 1]", self.momentum_m));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad(format!("smoothing {} outside [0, 1)", self.smoothing));
        }
        if !(0.0..=1.0).contains(&self.pinned_diagonal) {
            return bad(format!("pinned_diagonal {} outside [0, 1]", self.pinned_diagonal));
        }
        if self.ids_per_domain_per_batch == 0 || self.images_per_id < 2 {
            return bad("batches need at least one id and two images per id".into());
        }
        if self.hidden_dim == 0 || self.feature_dim == 0 {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }

    /// Learning rate for a zero-based epoch: the base rate divided by
    /// `1 / decay_factor` once for every decay epoch already reached.
    pub fn scheduled_lr(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        // Dividing by the reciprocal keeps 3.5e-4 / 10 / 10 exactly 3.5e-6.
        self.learning_rate / (1.0 / self.decay_factor).powi(decays as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.scheduled_lr(0), 3.5e-4);
        assert_eq!(c.scheduled_lr(29), 3.5e-4);
        assert_eq!(c.scheduled_lr(30), 3.5e-5);
        assert_eq!(c.scheduled_lr(49), 3.5e-5);
        assert_eq!(c.scheduled_lr(50), 3.5e-6);
        assert_eq!(c.scheduled_lr(59), 3.5e-6);
    }

    #[test]
    fn validation() {
        TrainConfig::default().validate().unwrap();
        let bad = [
            TrainConfig { decay_epochs: vec![50, 30], ..Default::default() },
            TrainConfig { decay_epochs: vec![30, 60], ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { momentum_m: 1.2, ..Default::default() },
            TrainConfig { images_per_id: 1, ..Default::default() },
            TrainConfig { smoothing: 1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(LdlError::InvalidConfig(_))), "{c:?}");
        }
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        }
        assert_eq!("ldl-3".parse::<Variant>().unwrap(), Variant::Ldl3);
        assert_eq!(Variant::OnehotCompare.objectives(), vec![Objective::OneHot, Objective::PinnedDistribution]);
        for o in [
            Objective::Baseline,
            Objective::OneHot,
            Objective::PinnedDistribution,
            Objective::Ldl(Redistribution::Ldl2),
        ] {
            assert_eq!(o.name().parse::<Objective>().unwrap(), o);
        }
    }
}
