use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, DenseLayer};
use super::matrix::Matrix;
use crate::error::{config, structural, Result};
use crate::scalar::Scalar;

/// Architecture description consumed by [`init_model`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// Widths of the hidden layers, input side first. Empty gives a linear softmax classifier.
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "ModelSpec::default_activation")]
    pub activation: Activation,
    pub class_count: usize,
}

impl ModelSpec {
    fn default_activation() -> Activation {
        Activation::Relu
    }

    /// `input → 128 ReLU → 64 ReLU → classes`.
    pub fn standard(input_dim: usize, class_count: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![128, 64],
            activation: Activation::Relu,
            class_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(config(format!(
                "class_count must be >= 2, got {}",
                self.class_count
            )));
        }
        if self.input_dim == 0 {
            return Err(config("input_dim must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(config("hidden layer widths must be >= 1"));
        }
        if self.activation == Activation::Identity && !self.hidden.is_empty() {
            return Err(config(
                "hidden activations must be non-negative (relu or sigmoid)",
            ));
        }
        Ok(())
    }
}

/// Feed-forward softmax classifier.
///
/// The final layer is linear and maps the `s`-wide hidden representation (HL) to `Q` logits.
/// Its `Q × s` weight matrix is the one the composition monitor reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MlpModel<F: Scalar> {
    layers: Vec<DenseLayer<F>>,
}

/// Everything produced by one forward pass that backprop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<F: Scalar> {
    /// `inputs[l]` is the input fed to layer `l`; `inputs[0]` is the sample itself.
    pub inputs: Vec<Vec<F>>,
    /// Pre-activation of every layer. The last entry holds the logits.
    pub pre_activations: Vec<Vec<F>>,
    pub probs: Vec<F>,
}

impl<F: Scalar> ForwardTrace<F> {
    /// Output `Y` of the hidden layer feeding the linear output layer.
    pub fn hl_output(&self) -> &[F] {
        self.inputs.last().expect("trace has at least one layer")
    }

    /// Logits `Z`.
    pub fn logits(&self) -> &[F] {
        self.pre_activations
            .last()
            .expect("trace has at least one layer")
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax<F: Scalar>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax (max-logit subtraction).
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: F = out.iter().copied().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

impl<F: Scalar> MlpModel<F> {
    /// Validates layer chaining, hidden activations and the linear output layer.
    pub fn new(layers: Vec<DenseLayer<F>>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| structural("model needs at least one layer"))?;
        if last.activation != Activation::Identity {
            return Err(structural("output layer must be linear (identity activation)"));
        }
        if last.out_dim() < 2 {
            return Err(structural("output layer needs at least 2 classes"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(structural(format!(
                    "layer {l} emits {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    l + 1,
                    pair[1].in_dim()
                )));
            }
            if pair[0].activation == Activation::Identity {
                return Err(structural(format!(
                    "hidden layer {l} must use a non-negative activation"
                )));
            }
        }
        if layers.iter().any(|l| !l.is_finite()) {
            return Err(crate::Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self { layers })
    }

    /// All-zero parameters with the given architecture.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let dims = layer_dims(spec);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, d)| DenseLayer::zeros(d[0], d[1], activation_for(spec, l, dims.len() - 1)))
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer<F>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer<F>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// `Q`.
    pub fn class_count(&self) -> usize {
        self.output_layer().out_dim()
    }

    /// `s`, the width of HL.
    pub fn hidden_width(&self) -> usize {
        self.output_layer().in_dim()
    }

    pub fn output_layer(&self) -> &DenseLayer<F> {
        self.layers.last().expect("validated non-empty")
    }

    /// The `Q × s` link weights between HL and the output nodes.
    pub fn output_weights(&self) -> &Matrix<F> {
        &self.output_layer().weights
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }

    pub fn forward(&self, input: &[F]) -> Result<ForwardTrace<F>> {
        if input.len() != self.input_dim() {
            return Err(structural(format!(
                "input has {} features, model expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(self.forward_unchecked(input))
    }

    pub(crate) fn forward_unchecked(&self, input: &[F]) -> ForwardTrace<F> {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n);
        let mut current = input.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::with_capacity(layer.out_dim());
            layer.affine(&current, &mut pre);
            let next = pre.iter().map(|&z| layer.activation.apply(z)).collect();
            inputs.push(std::mem::replace(&mut current, next));
            pre_activations.push(pre);
        }
        let probs = softmax(pre_activations.last().expect("non-empty"));
        ForwardTrace {
            inputs,
            pre_activations,
            probs,
        }
    }

    /// Class probabilities only.
    pub fn predict_proba(&self, input: &[F]) -> Result<Vec<F>> {
        Ok(self.forward(input)?.probs)
    }

    pub fn predict(&self, input: &[F]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(input)?))
    }
}

fn layer_dims(spec: &ModelSpec) -> Vec<usize> {
    let mut dims = Vec::with_capacity(spec.hidden.len() + 2);
    dims.push(spec.input_dim);
    dims.extend_from_slice(&spec.hidden);
    dims.push(spec.class_count);
    dims
}

fn activation_for(spec: &ModelSpec, layer: usize, layer_count: usize) -> Activation {
    if layer + 1 == layer_count {
        Activation::Identity
    } else {
        spec.activation
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_model<F: Scalar>(spec: &ModelSpec, seed: u64) -> Result<MlpModel<F>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = layer_dims(spec);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (l, d) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (d[0], d[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-limit, limit).expect("limit > 0");
        let data = (0..fan_in * fan_out)
            .map(|_| F::of(dist.sample(&mut rng)))
            .collect();
        let weights = Matrix::from_vec(fan_out, fan_in, data)?;
        layers.push(DenseLayer::new(
            weights,
            vec![F::zero(); fan_out],
            activation_for(spec, l, dims.len() - 1),
        )?);
    }
    MlpModel::new(layers)
}
