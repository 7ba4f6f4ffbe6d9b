//! Multilayer perceptron testbed with interchangeable output heads.
//!
//! Checkpoints are JSON:
//!
//! ```json
//! {
//!   "config": {"input_dim": 8, "hidden_dims": [32, 16],
//!              "head": {"type": "softmax", "classes": 4},
//!              "activation": "relu", "init_seed": 7},
//!   "layers": [
//!     {"weights": {"rows": 32, "cols": 8, "data": [...]}, "biases": [...]},
//!     ...
//!   ]
//! }
//! ```
//!
//! `weights` is row-major with one row per output unit; the last entry of
//! `layers` is the head.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::HeadKind;
use crate::numerics::{softmax, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation; ReLU uses 0 at the kink.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Head {
    Softmax { classes: usize },
    Corn { classes: usize },
    Regression,
}

impl Head {
    /// Head matching a loss family for `num_classes` classes.
    pub fn for_loss(kind: HeadKind, num_classes: usize) -> Self {
        match kind {
            HeadKind::Softmax => Head::Softmax {
                classes: num_classes,
            },
            HeadKind::Corn => Head::Corn {
                classes: num_classes,
            },
            HeadKind::Regression => Head::Regression,
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Softmax { .. } => HeadKind::Softmax,
            Head::Corn { .. } => HeadKind::Corn,
            Head::Regression => HeadKind::Regression,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            Head::Softmax { classes } => classes,
            Head::Corn { classes } => classes - 1,
            Head::Regression => 1,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match *self {
            Head::Softmax { classes } | Head::Corn { classes } => Some(classes),
            Head::Regression => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub head: Head,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init_seed: u64,
}

impl MlpConfig {
    /// `input_dim → 32 → 16 → head` with ReLU.
    pub fn default_for(input_dim: usize, head: Head, init_seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![32, 16],
            head,
            activation: Activation::Relu,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::Config("hidden_dims must not be empty".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("every hidden layer needs at least 1 unit".into()));
        }
        match self.head {
            Head::Softmax { classes } | Head::Corn { classes } if classes < 2 => Err(
                Error::Config(format!("head needs at least 2 classes, got {classes}")),
            ),
            _ => Ok(()),
        }
    }

    /// `(fan_in, fan_out)` for every layer including the head.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.head.output_len()));
        dims
    }
}

/// Fully connected layer; `weights` has one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_out, fan_in),
            biases: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }

    fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.weights.matvec(x)?;
        for (zi, b) in z.iter_mut().zip(&self.biases) {
            *zi += b;
        }
        Ok(z)
    }
}

/// Glorot-uniform half-width for a layer.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Activations recorded by [`MlpModel::forward`], consumed by
/// [`MlpModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    layer_inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    head_output: Vec<f64>,
}

impl ForwardPass {
    /// Probabilities for a softmax head, raw logits for CORN, the raw scalar
    /// for regression.
    pub fn head_output(&self) -> &[f64] {
        &self.head_output
    }

    /// Last hidden-layer activation.
    pub fn penultimate(&self) -> &[f64] {
        self.layer_inputs.last().expect("at least one layer")
    }

    /// Pre-activation vector of every layer, head layer last.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre_activations
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        let penultimate = self.layer_inputs.last().cloned().unwrap_or_default();
        (self.head_output, penultimate)
    }
}

/// Parameter gradients with the same layout as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.as_mut_slice().fill(0.0);
            l.biases.fill(0.0);
        }
    }

    /// `self = decay · self + scale · other`.
    pub fn decay_and_add(&mut self, decay: f64, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x = decay * *x + scale * y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x = decay * *x + scale * y;
            }
        }
    }

    /// Flattened in the same order as [`MlpModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(&l.biases);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    config: MlpConfig,
    layers: Vec<Layer>,
}

impl MlpModel {
    /// Glorot-uniform weights from `config.init_seed`, zero biases.
    pub fn init(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.init_seed);
        let layers = config
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let bound = glorot_bound(fan_in, fan_out);
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.uniform(-bound, bound))
                    .collect();
                Layer {
                    weights: Matrix::new(fan_out, fan_in, data).expect("finite glorot draws"),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// Wraps explicit layers, checking them against `config`.
    pub fn from_layers(config: MlpConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let dims = config.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::Shape(format!(
                "config describes {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (i, ((fan_in, fan_out), layer)) in dims.iter().zip(&layers).enumerate() {
            if layer.fan_in() != *fan_in
                || layer.fan_out() != *fan_out
                || layer.biases.len() != *fan_out
            {
                return Err(Error::Shape(format!(
                    "layer {i} should be {fan_out}x{fan_in} with {fan_out} biases"
                )));
            }
            if layer.biases.iter().any(|b| !b.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite bias in layer {i}")));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head(&self) -> Head {
        self.config.head
    }

    pub fn penultimate_dim(&self) -> usize {
        *self.config.hidden_dims.last().expect("validated non-empty")
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardPass> {
        if x.len() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        let n = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n);
        let mut a = x.to_vec();
        for layer in &self.layers[..n - 1] {
            let z = layer.affine(&a)?;
            let next = z.iter().map(|&v| self.config.activation.apply(v)).collect();
            layer_inputs.push(std::mem::replace(&mut a, next));
            pre_activations.push(z);
        }
        let z = self.layers[n - 1].affine(&a)?;
        let head_output = match self.config.head {
            Head::Softmax { .. } => softmax(&z)?.into_inner(),
            Head::Corn { .. } | Head::Regression => z.clone(),
        };
        layer_inputs.push(a);
        pre_activations.push(z);
        Ok(ForwardPass {
            layer_inputs,
            pre_activations,
            head_output,
        })
    }

    /// Reverse-mode gradients for `upstream = ∂L/∂head_output`. For the
    /// softmax head the upstream gradient is with respect to the
    /// probabilities and is chained through the softmax Jacobian here.
    pub fn backward(&self, pass: &ForwardPass, upstream: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_accumulate(pass, upstream, &mut grads)?;
        Ok(grads)
    }

    /// As [`MlpModel::backward`], adding into an existing gradient buffer.
    pub fn backward_accumulate(
        &self,
        pass: &ForwardPass,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        let n = self.layers.len();
        let consistent = pass.layer_inputs.len() == n
            && pass.pre_activations.len() == n
            && self
                .layers
                .iter()
                .zip(&pass.layer_inputs)
                .all(|(l, a)| l.fan_in() == a.len());
        if !consistent {
            return Err(Error::State(
                "forward pass was not produced by this model".into(),
            ));
        }
        if upstream.len() != pass.head_output.len() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, head has {}",
                upstream.len(),
                pass.head_output.len()
            )));
        }

        let mut delta: Vec<f64> = match self.config.head {
            Head::Softmax { .. } => {
                let p = &pass.head_output;
                let mean: f64 = upstream.iter().zip(p).map(|(g, p)| g * p).sum();
                upstream
                    .iter()
                    .zip(p)
                    .map(|(g, p)| p * (g - mean))
                    .collect()
            }
            Head::Corn { .. } | Head::Regression => upstream.to_vec(),
        };

        if grads.layers.len() != n {
            return Err(Error::Shape("gradient buffer does not match the model".into()));
        }
        for l in (0..n).rev() {
            let input = &pass.layer_inputs[l];
            let g = &mut grads.layers[l];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (w, &a) in g.weights.row_mut(r).iter_mut().zip(input) {
                        *w += d * a;
                    }
                }
                g.biases[r] += d;
            }
            if l > 0 {
                let da = self.layers[l].weights.matvec_transposed(&delta)?;
                delta = da
                    .iter()
                    .zip(&pass.pre_activations[l - 1])
                    .map(|(g, &z)| g * self.config.activation.derivative(z))
                    .collect();
            }
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.biases.len())
            .sum()
    }

    /// All weights and biases, layer by layer (weights row-major, then biases).
    pub fn parameters(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_parameters() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_parameters(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&params[offset..offset + w.len()]);
            offset += w.len();
            let b = &mut l.biases;
            let len = b.len();
            b.copy_from_slice(&params[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.as_slice().iter().all(|w| w.is_finite())
                && l.biases.iter().all(|b| b.is_finite())
        })
    }

    /// `θ += scale · g` for every parameter.
    pub fn apply_update(&mut self, update: &Gradients, scale: f64) {
        for (l, u) in self.layers.iter_mut().zip(&update.layers) {
            for (w, d) in l.weights.as_mut_slice().iter_mut().zip(u.weights.as_slice()) {
                *w += scale * d;
            }
            for (b, d) in l.biases.iter_mut().zip(&u.biases) {
                *b += scale * d;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let raw: MlpModel = serde_json::from_str(json)?;
        Self::from_layers(raw.config, raw.layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
