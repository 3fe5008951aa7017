use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::model::{ForwardTrace, MlpModel};
use crate::error::{structural, Error, Result};
use crate::scalar::Scalar;

/// Gradient (or any parameter-shaped delta) of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LayerGrad<F: Scalar> {
    pub weights: Matrix<F>,
    pub bias: Vec<F>,
}

/// Parameter-shaped container: gradients, weight deltas, accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GradientSet<F: Scalar> {
    pub layers: Vec<LayerGrad<F>>,
    /// Number of samples folded into this set, informational.
    pub batch_size: usize,
}

impl<F: Scalar> GradientSet<F> {
    pub fn zeros_like(model: &MlpModel<F>) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.out_dim(), l.in_dim()),
                    bias: vec![F::zero(); l.out_dim()],
                })
                .collect(),
            batch_size: 0,
        }
    }

    pub fn is_congruent(&self, model: &MlpModel<F>) -> bool {
        self.layers.len() == model.layers().len()
            && self.layers.iter().zip(model.layers()).all(|(g, l)| {
                g.weights.shape() == l.weights.shape() && g.bias.len() == l.bias.len()
            })
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.is_finite() && g.bias.iter().all(|b| b.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == F::zero())
    }

    /// Every entry, layer by layer, weights before bias.
    pub fn values(&self) -> impl Iterator<Item = F> + '_ {
        self.layers.iter().flat_map(|g| {
            g.weights
                .as_slice()
                .iter()
                .chain(g.bias.iter())
                .copied()
        })
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut F> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|g| g.weights.as_mut_slice().iter_mut().chain(g.bias.iter_mut()))
    }

    pub fn scale(&mut self, k: F) {
        for v in self.values_mut() {
            *v *= k;
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len()
            || self
                .layers
                .iter()
                .zip(&other.layers)
                .any(|(a, b)| a.weights.shape() != b.weights.shape() || a.bias.len() != b.bias.len())
        {
            return Err(structural("gradient sets are not shape-congruent"));
        }
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
        self.batch_size += other.batch_size;
        Ok(())
    }

    /// Last-layer weight block (`Q × s`).
    pub fn output_weights(&self) -> &Matrix<F> {
        &self.layers.last().expect("non-empty").weights
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.values()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(F::zero(), F::max)
    }
}

/// Analytic cross-entropy gradient of the output-layer link weights for a sample of class `true_class`:
/// `(f_p - 1) y_n` on row `p`, `f_m y_n` on every other row `m`.
pub fn last_layer_gradient<F: Scalar>(trace: &ForwardTrace<F>, true_class: usize) -> Result<Matrix<F>> {
    let q = trace.probs.len();
    if true_class >= q {
        return Err(Error::Index {
            what: "class",
            index: true_class,
            len: q,
        });
    }
    let y = trace.hl_output();
    let mut g = Matrix::zeros(q, y.len());
    for m in 0..q {
        let coeff = if m == true_class {
            trace.probs[m] - F::one()
        } else {
            trace.probs[m]
        };
        for (dst, &yn) in g.row_mut(m).iter_mut().zip(y) {
            *dst = coeff * yn;
        }
    }
    Ok(g)
}

impl<F: Scalar> MlpModel<F> {
    /// Backprop of `dL/dz` (gradient on the logits) through every layer.
    pub fn backward(&self, trace: &ForwardTrace<F>, logit_grad: &[F]) -> Result<GradientSet<F>> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_accumulate(trace, logit_grad, &mut grads)?;
        Ok(grads)
    }

    /// Adds this sample's gradient into `acc`.
    pub fn backward_accumulate(
        &self,
        trace: &ForwardTrace<F>,
        logit_grad: &[F],
        acc: &mut GradientSet<F>,
    ) -> Result<()> {
        let layers = self.layers();
        if trace.inputs.len() != layers.len() || trace.pre_activations.len() != layers.len() {
            return Err(structural("trace was not produced by this model"));
        }
        if logit_grad.len() != self.class_count() {
            return Err(structural(format!(
                "logit gradient has length {}, model has {} classes",
                logit_grad.len(),
                self.class_count()
            )));
        }
        if !acc.is_congruent(self) {
            return Err(structural("accumulator is not shape-congruent with the model"));
        }
        let mut delta = logit_grad.to_vec();
        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let input = &trace.inputs[l];
            let g = &mut acc.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == F::zero() {
                    continue;
                }
                g.bias[o] += d;
                for (dst, &x) in g.weights.row_mut(o).iter_mut().zip(input) {
                    *dst += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let prev = &layers[l - 1];
            let mut next = vec![F::zero(); layer.in_dim()];
            for (o, &d) in delta.iter().enumerate() {
                if d == F::zero() {
                    continue;
                }
                for (dst, &w) in next.iter_mut().zip(layer.weights.row(o)) {
                    *dst += w * d;
                }
            }
            for (i, v) in next.iter_mut().enumerate() {
                *v *= prev
                    .activation
                    .derivative(trace.pre_activations[l - 1][i], input[i]);
            }
            delta = next;
        }
        acc.batch_size += 1;
        Ok(())
    }

    /// `W ← W − λ ∇`, returning the updated model.
    pub fn sgd_step(&self, grads: &GradientSet<F>, learning_rate: F) -> Result<MlpModel<F>> {
        let mut next = self.clone();
        next.apply_sgd(grads, learning_rate)?;
        Ok(next)
    }

    pub fn apply_sgd(&mut self, grads: &GradientSet<F>, learning_rate: F) -> Result<()> {
        self.apply_scaled(grads, -learning_rate)
    }

    /// `W ← W + k · delta`.
    pub fn apply_scaled(&mut self, delta: &GradientSet<F>, k: F) -> Result<()> {
        if !k.is_finite() {
            return Err(Error::Numeric(format!("non-finite step factor {k}")));
        }
        if !delta.is_congruent(self) {
            return Err(structural("update is not shape-congruent with the model"));
        }
        if !delta.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        for (layer, g) in self.layers_mut().iter_mut().zip(&delta.layers) {
            for (w, &d) in layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(g.weights.as_slice())
            {
                *w += k * d;
            }
            for (b, &d) in layer.bias.iter_mut().zip(&g.bias) {
                *b += k * d;
            }
        }
        if !self.is_finite() {
            return Err(Error::Numeric("update produced non-finite parameters".into()));
        }
        Ok(())
    }

    /// `self − base`, parameter by parameter.
    pub fn delta_from(&self, base: &MlpModel<F>) -> Result<GradientSet<F>> {
        let mut out = GradientSet::zeros_like(self);
        if !out.is_congruent(base) {
            return Err(structural("models have different architectures"));
        }
        for ((g, a), b) in out.layers.iter_mut().zip(self.layers()).zip(base.layers()) {
            g.weights = a.weights.sub(&b.weights)?;
            for ((dst, &x), &y) in g.bias.iter_mut().zip(&a.bias).zip(&b.bias) {
                *dst = x - y;
            }
        }
        Ok(out)
    }
}
