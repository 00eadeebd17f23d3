//! Two-layer encoder with a linear classifier head, trained by hand-written
//! backpropagation and Adam.
//!
//! ```text
//! inputs --W1,b1--> tanh --W2,b2--> features --W3,b3--> logits
//! ```

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LdlError, Result};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub const CHECKPOINT_FORMAT: &str = "ldl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Affine map `y = x W^T + b` with `W` stored as `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((outputs, inputs), |_| T::of(rng.random_range(-bound..bound)));
        Self { weight, bias: Array1::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: ArrayView2<'_, T>) -> Array2<T> {
        x.dot(&self.weight.t()) + &self.bias
    }

    fn all_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }

    fn slices_mut(&mut self) -> [&mut [T]; 2] {
        [self.weight.as_slice_mut().expect("standard layout"), self.bias.as_slice_mut().expect("standard layout")]
    }

    fn slices(&self) -> [&[T]; 2] {
        [self.weight.as_slice().expect("standard layout"), self.bias.as_slice().expect("standard layout")]
    }
}

/// Parameter-shaped container, used for both gradients and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Layers<T> {
    pub hidden: Dense<T>,
    pub embed: Dense<T>,
    pub classifier: Dense<T>,
}

impl<T: Scalar> Layers<T> {
    pub fn zeros_like(other: &Layers<T>) -> Self {
        Self {
            hidden: Dense::zeros(other.hidden.inputs(), other.hidden.outputs()),
            embed: Dense::zeros(other.embed.inputs(), other.embed.outputs()),
            classifier: Dense::zeros(other.classifier.inputs(), other.classifier.outputs()),
        }
    }

    pub fn slices(&self) -> [&[T]; 6] {
        let [a, b] = self.hidden.slices();
        let [c, d] = self.embed.slices();
        let [e, f] = self.classifier.slices();
        [a, b, c, d, e, f]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 6] {
        let [a, b] = self.hidden.slices_mut();
        let [c, d] = self.embed.slices_mut();
        let [e, f] = self.classifier.slices_mut();
        [a, b, c, d, e, f]
    }

    fn all_finite(&self) -> bool {
        self.hidden.all_finite() && self.embed.all_finite() && self.classifier.all_finite()
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

pub const TENSOR_NAMES: [&str; 6] =
    ["hidden.weight", "hidden.bias", "embed.weight", "embed.bias", "classifier.weight", "classifier.bias"];

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first: Layers<T>,
    pub second: Layers<T>,
}

/// Encoder and classifier weights plus optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub layers: Layers<T>,
    pub adam: AdamState<T>,
    pub step_count: u64,
}

/// Activations retained by [`ModelParams::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    inputs: Array2<T>,
    hidden: Array2<T>,
    features: Array2<T>,
    step_count: u64,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub features: Array2<T>,
    pub logits: Array2<T>,
    pub cache: ForwardCache<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        feature_dim: usize,
        class_count: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = Layers {
            hidden: Dense::init(input_dim, hidden_dim, rng),
            embed: Dense::init(hidden_dim, feature_dim, rng),
            classifier: Dense::init(feature_dim, class_count, rng),
        };
        Self::from_layers(layers)
    }

    pub fn from_layers(layers: Layers<T>) -> Self {
        let adam = AdamState { first: Layers::zeros_like(&layers), second: Layers::zeros_like(&layers) };
        Self { layers, adam, step_count: 0 }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.hidden.inputs()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.embed.outputs()
    }

    pub fn class_count(&self) -> usize {
        self.layers.classifier.outputs()
    }

    pub fn forward(&self, inputs: ArrayView2<'_, T>) -> Result<ForwardOutput<T>> {
        if inputs.ncols() != self.input_dim() {
            return Err(LdlError::ShapeMismatch(format!(
                "inputs have {} columns, model expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(LdlError::NonFiniteInput("model inputs".into()));
        }
        let hidden = self.layers.hidden.apply(inputs).mapv_into(T::tanh);
        let features = self.layers.embed.apply(hidden.view());
        let logits = self.layers.classifier.apply(features.view());
        let cache =
            ForwardCache { inputs: inputs.to_owned(), hidden, features: features.clone(), step_count: self.step_count };
        Ok(ForwardOutput { features, logits, cache })
    }

    /// Features only, for evaluation.
    pub fn embed(&self, inputs: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward(inputs)?.features)
    }

    /// Reverse-mode gradients given upstream gradients on logits and features.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: ArrayView2<'_, T>,
        grad_features: ArrayView2<'_, T>,
    ) -> Result<Layers<T>> {
        if cache.step_count != self.step_count
            || cache.inputs.ncols() != self.input_dim()
            || cache.hidden.ncols() != self.layers.hidden.outputs()
        {
            return Err(LdlError::StaleCache);
        }
        let b = cache.inputs.nrows();
        if grad_logits.dim() != (b, self.class_count()) || grad_features.dim() != (b, self.feature_dim()) {
            return Err(LdlError::ShapeMismatch(format!(
                "upstream gradients {:?} / {:?} for batch of {b}",
                grad_logits.dim(),
                grad_features.dim()
            )));
        }
        let classifier = Dense { weight: grad_logits.t().dot(&cache.features), bias: grad_logits.sum_axis(Axis(0)) };
        let d_features = grad_logits.dot(&self.layers.classifier.weight) + grad_features;
        let embed = Dense { weight: d_features.t().dot(&cache.hidden), bias: d_features.sum_axis(Axis(0)) };
        let mut d_pre = d_features.dot(&self.layers.embed.weight);
        d_pre.zip_mut_with(&cache.hidden, |g, &h| *g *= T::one() - h * h);
        let hidden = Dense { weight: d_pre.t().dot(&cache.inputs), bias: d_pre.sum_axis(Axis(0)) };
        Ok(Layers { hidden, embed, classifier })
    }

    /// Bias-corrected Adam step.
    pub fn adam_step(&mut self, grads: &Layers<T>, lr: T) -> Result<()> {
        for (name, g) in TENSOR_NAMES.iter().zip(grads.slices()) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(LdlError::NonFiniteGradient(name));
            }
        }
        self.step_count += 1;
        let (b1, b2, eps) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2), T::of(ADAM_EPS));
        let t = self.step_count as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let params = self.layers.slices_mut();
        let firsts = self.adam.first.slices_mut();
        let seconds = self.adam.second.slices_mut();
        for (((p, m), v), g) in params.into_iter().zip(firsts).zip(seconds).zip(grads.slices()) {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (T::one() - b1) * g[k];
                v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        debug_assert!(self.layers.all_finite());
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let tensor = |name: &str, shape: Vec<usize>, data: &[T]| TensorRecord {
            name: name.to_string(),
            shape,
            data: data.iter().map(|v| v.as_f64()).collect(),
        };
        let records = |l: &Layers<T>| {
            let shapes = layer_shapes(l);
            TENSOR_NAMES.iter().zip(shapes).zip(l.slices()).map(|((n, s), d)| tensor(n, s, d)).collect::<Vec<_>>()
        };
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            format_version: CHECKPOINT_VERSION,
            input_dim: self.input_dim(),
            hidden_dim: self.layers.hidden.outputs(),
            feature_dim: self.feature_dim(),
            class_count: self.class_count(),
            step_count: self.step_count,
            params: records(&self.layers),
            adam_first: records(&self.adam.first),
            adam_second: records(&self.adam.second),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |r: String| LdlError::ShapeMismatch(format!("checkpoint: {r}"));
        if ck.format != CHECKPOINT_FORMAT || ck.format_version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format {} v{}", ck.format, ck.format_version)));
        }
        let template = Layers::<T> {
            hidden: Dense::zeros(ck.input_dim, ck.hidden_dim),
            embed: Dense::zeros(ck.hidden_dim, ck.feature_dim),
            classifier: Dense::zeros(ck.feature_dim, ck.class_count),
        };
        let fill = |records: &[TensorRecord]| -> Result<Layers<T>> {
            let mut out = template.clone();
            let shapes = layer_shapes(&out);
            if records.len() != TENSOR_NAMES.len() {
                return Err(bad(format!("{} tensors, expected {}", records.len(), TENSOR_NAMES.len())));
            }
            for (((slot, rec), name), shape) in out.slices_mut().into_iter().zip(records).zip(TENSOR_NAMES).zip(shapes)
            {
                if rec.name != name || rec.shape != shape || rec.data.len() != slot.len() {
                    return Err(bad(format!(
                        "tensor {} has shape {:?}, expected {name} {shape:?}",
                        rec.name, rec.shape
                    )));
                }
                slot.iter_mut().zip(&rec.data).for_each(|(s, &v)| *s = T::of(v));
            }
            Ok(out)
        };
        let layers = fill(&ck.params)?;
        if !layers.all_finite() {
            return Err(bad("non-finite parameter".into()));
        }
        Ok(Self {
            layers,
            adam: AdamState { first: fill(&ck.adam_first)?, second: fill(&ck.adam_second)? },
            step_count: ck.step_count,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint()).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| LdlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LdlError::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| LdlError::format(path, e.to_string()))?;
        Self::from_checkpoint(&ck)
    }
}

fn layer_shapes<T>(l: &Layers<T>) -> [Vec<usize>; 6] {
    let d = |x: &Dense<T>| (x.weight.shape().to_vec(), x.bias.shape().to_vec());
    let (a, b) = d(&l.hidden);
    let (c, e) = d(&l.embed);
    let (f, g) = d(&l.classifier);
    [a, b, c, e, f, g]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Self-describing JSON checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub class_count: usize,
    pub step_count: u64,
    pub params: Vec<TensorRecord>,
    pub adam_first: Vec<TensorRecord>,
    pub adam_second: Vec<TensorRecord>,
}
