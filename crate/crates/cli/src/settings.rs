//! Experiment configuration: flat `key = value` files layered under
//! command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ldl_core::config::{TrainConfig, Variant};
use ldl_core::eval::Metric;
use ldl_core::SyntheticSpec;

/// Invalid configuration input; reported as a usage error.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

/// Which defaults the training settings start from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// The original training protocol.
    Reference,
    /// Larger step size and 8 x 4 batches, sized for the default synthetic
    /// spec.
    Desk,
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reference" => Ok(Self::Reference),
            "desk" => Ok(Self::Desk),
            _ => Err(format!("unknown profile {s:?} (expected reference or desk)")),
        }
    }
}

/// Hyper-parameter varied by `ablate --sweep`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Momentum,
    Lambda,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Momentum => "m",
            Self::Lambda => "lambda",
        }
    }

    pub fn apply(self, config: &mut TrainConfig, value: f64) {
        match self {
            Self::Momentum => config.momentum_m = value,
            Self::Lambda => config.lambda = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "m" | "momentum" => Ok(Self::Momentum),
            "lambda" => Ok(Self::Lambda),
            _ => Err(format!("unknown sweep parameter {s:?} (expected m or lambda)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub spec: SyntheticSpec,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub variants: Vec<Variant>,
    /// Number of seeds, counted up from the root seed.
    pub repeats: usize,
    pub metric: Metric,
    pub source_eval: bool,
    pub sweep_m: Vec<f64>,
    pub sweep_lambda: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::with_profile(Profile::Reference)
    }
}

/// Every recognised key, in documentation order.
pub const KEYS: &[&str] = &[
    "profile",
    "seed",
    "output_dir",
    "variants",
    "repeats",
    "metric",
    "source_eval",
    "sweep_m",
    "sweep_lambda",
    "classes_per_domain",
    "samples_per_class",
    "latent_dim",
    "input_dim",
    "identity_scale",
    "within_class_noise",
    "domain_shift_strength",
    "view_count",
    "view_shift",
    "learning_rate",
    "decay_epochs",
    "decay_factor",
    "total_epochs",
    "momentum_m",
    "lambda",
    "ids_per_domain_per_batch",
    "images_per_id",
    "hidden_dim",
    "feature_dim",
    "margin",
    "smoothing",
    "pinned_diagonal",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

pub fn parse_variants(value: &str) -> Result<Vec<Variant>, ConfigError> {
    value.split(',').map(|v| v.trim().parse::<Variant>().map_err(ConfigError)).collect()
}

impl ExperimentConfig {
    pub fn with_profile(profile: Profile) -> Self {
        let train = match profile {
            Profile::Reference => TrainConfig::default(),
            Profile::Desk => TrainConfig::desk(),
        };
        Self {
            spec: SyntheticSpec::default(),
            train,
            output_dir: PathBuf::from("ldl-out"),
            variants: Variant::ALL.to_vec(),
            repeats: 1,
            metric: Metric::Euclidean,
            source_eval: false,
            sweep_m: vec![0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
            sweep_lambda: vec![0.1, 0.5, 1.0, 1.5, 2.0],
        }
    }

    /// Builds a configuration from file entries and overrides, later layers
    /// winning. A `profile` entry anywhere selects the base defaults.
    pub fn from_layers(layers: &[Vec<(String, String)>]) -> Result<Self, ConfigError> {
        let mut merged: BTreeMap<&str, &str> = BTreeMap::new();
        for layer in layers {
            for (k, v) in layer {
                merged.insert(k, v);
            }
        }
        let profile = merged.get("profile").map_or(Ok(Profile::Reference), |v| v.parse().map_err(ConfigError))?;
        let mut config = Self::with_profile(profile);
        for (k, v) in merged {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let (s, t) = (&mut self.spec, &mut self.train);
        match key {
            "profile" => {}
            "seed" => {
                let seed = parse(key, v)?;
                s.seed = seed;
                t.seed = seed;
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            "variants" => self.variants = parse_variants(v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "metric" => self.metric = v.parse().map_err(ConfigError)?,
            "source_eval" => self.source_eval = parse(key, v)?,
            "sweep_m" => self.sweep_m = parse_list(key, v)?,
            "sweep_lambda" => self.sweep_lambda = parse_list(key, v)?,
            "classes_per_domain" => s.classes_per_domain = parse_list(key, v)?,
            "samples_per_class" => s.samples_per_class = parse(key, v)?,
            "latent_dim" => s.latent_dim = parse(key, v)?,
            "input_dim" => s.input_dim = parse(key, v)?,
            "identity_scale" => s.identity_scale = parse(key, v)?,
            "within_class_noise" => s.within_class_noise = parse(key, v)?,
            "domain_shift_strength" => s.domain_shift_strength = parse(key, v)?,
            "view_count" => s.view_count = parse(key, v)?,
            "view_shift" => s.view_shift = parse(key, v)?,
            "learning_rate" => t.learning_rate = parse(key, v)?,
            "decay_epochs" => t.decay_epochs = parse_list(key, v)?,
            "decay_factor" => t.decay_factor = parse(key, v)?,
            "total_epochs" => t.total_epochs = parse(key, v)?,
            "momentum_m" => t.momentum_m = parse(key, v)?,
            "lambda" => t.lambda = parse(key, v)?,
            "ids_per_domain_per_batch" => t.ids_per_domain_per_batch = parse(key, v)?,
            "images_per_id" => t.images_per_id = parse(key, v)?,
            "hidden_dim" => t.hidden_dim = parse(key, v)?,
            "feature_dim" => t.feature_dim = parse(key, v)?,
            "margin" => t.margin = parse(key, v)?,
            "smoothing" => t.smoothing = parse(key, v)?,
            "pinned_diagonal" => t.pinned_diagonal = parse(key, v)?,
            other => return Err(ConfigError(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spec.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError(e.to_string()))?;
        if self.repeats == 0 {
            return Err(ConfigError("repeats must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(ConfigError("no variants selected".into()));
        }
        Ok(())
    }

    /// Seeds of all repeats.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats).map(|r| ldl_core::experiment::repeat_seed(self.train.seed, r)).collect()
    }

    pub fn sweep_values(&self, param: SweepParam) -> &[f64] {
        match param {
            SweepParam::Momentum => &self.sweep_m,
            SweepParam::Lambda => &self.sweep_lambda,
        }
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// repeated keys are an error.
pub fn parse_file_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| ConfigError(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(ConfigError(format!("line {}: unknown key {k:?}", n + 1)));
        }
        if out.iter().any(|(seen, _)| seen == k) {
            return Err(ConfigError(format!("line {}: duplicate key {k:?}", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_file(path: &Path) -> Result<Vec<(String, String)>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_file_text(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
}

/// Parses a `--set key=value` override.
pub fn parse_assignment(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError(format!("expected key=value, got {s:?}")))?;
    let k = k.trim();
    if !KEYS.contains(&k) {
        return Err(ConfigError(format!("unknown key {k:?}")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_follow_profile() {
        let reference = ExperimentConfig::from_layers(&[]).unwrap();
        assert_eq!(reference.train, TrainConfig::default());
        let desk = ExperimentConfig::from_layers(&[pairs(&[("profile", "desk")])]).unwrap();
        assert_eq!(desk.train, TrainConfig::desk());
    }

    #[test]
    fn later_layers_win() {
        let file = pairs(&[("seed", "3"), ("lambda", "0.5"), ("variants", "baseline,LDL-3")]);
        let flags = pairs(&[("seed", "9")]);
        let c = ExperimentConfig::from_layers(&[file, flags]).unwrap();
        assert_eq!((c.train.seed, c.spec.seed), (9, 9));
        assert_eq!(c.train.lambda, 0.5);
        assert_eq!(c.variants, vec![Variant::Baseline, Variant::Ldl3]);
    }

    #[test]
    fn file_syntax() {
        let text = "# comment\n\nseed = 4  # trailing\nclasses_per_domain = 5, 5, 6\n";
        assert_eq!(parse_file_text(text).unwrap(), pairs(&[("seed", "4"), ("classes_per_domain", "5, 5, 6")]));
        assert!(parse_file_text("seed 4").is_err());
        assert!(parse_file_text("seed = 1\nseed = 2").is_err());
        assert!(parse_file_text("bogus = 1").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        for (k, v) in
            [("repeats", "0"), ("momentum_m", "2"), ("variants", "LDL-9"), ("learning_rate", "x"), ("metric", "l1")]
        {
            assert!(ExperimentConfig::from_layers(&[pairs(&[(k, v)])]).is_err(), "{k}={v}");
        }
    }

    #[test]
    fn every_key_is_settable() {
        let mut c = ExperimentConfig::default();
        for k in KEYS {
            let v = match *k {
                "profile" => "desk",
                "output_dir" => "x",
                "variants" => "LDL-2",
                "metric" => "cosine",
                "source_eval" => "true",
                "classes_per_domain" | "decay_epochs" | "sweep_m" | "sweep_lambda" => "1,2",
                _ => "3",
            };
            c.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
    }
}
