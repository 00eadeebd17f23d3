//! Label distribution learning for multi-source identity retrieval.
//!
//! The crate tracks per-class classifier predictions, turns them into
//! cross-domain soft targets once per epoch, and trains a small encoder
//! against those targets alongside classification and triplet losses.
//! Numerical code is generic over [`Scalar`]; the aliases at the crate root
//! pick `f64`.

pub mod config;
pub mod engine;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod layout;
pub mod losses;
pub mod model;
pub mod scalar;
pub mod seeds;
pub mod snapshot;
pub mod synth;
pub mod train;

pub use config::{Objective, TrainConfig, Variant};
pub use engine::{ClassSimilarity, LabelDistributionSet, LdlEngine, Redistribution, TrackingMatrix};
pub use error::{LdlError, Result};
pub use layout::DomainLayout;
pub use losses::{Composition, LossBreakdown};
pub use model::ModelParams;
pub use scalar::Scalar;
pub use synth::{Dataset, GeneratedData, SyntheticSpec};
pub use train::{train, train_variant, History, TrainOutcome};

pub type Engine = LdlEngine<f64>;
pub type Engine32 = LdlEngine<f32>;
pub type Model = ModelParams<f64>;
pub type Model32 = ModelParams<f32>;
pub type Data = Dataset<f64>;
