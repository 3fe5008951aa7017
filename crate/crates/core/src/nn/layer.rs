use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{structural, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Relu => x.max(F::zero()),
            Activation::Sigmoid => F::one() / (F::one() + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `pre` and the output `out`.
    #[inline]
    pub fn derivative<F: Scalar>(self, pre: F, out: F) -> F {
        match self {
            Activation::Relu => {
                if pre > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => out * (F::one() - out),
            Activation::Identity => F::one(),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Sigmoid),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// `y = activation(W x + b)` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DenseLayer<F: Scalar> {
    pub weights: Matrix<F>,
    pub bias: Vec<F>,
    pub activation: Activation,
}

impl<F: Scalar> DenseLayer<F> {
    pub fn new(weights: Matrix<F>, bias: Vec<F>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(structural(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![F::zero(); out_dim],
            activation,
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Writes the pre-activation into `pre`.
    #[inline]
    pub(crate) fn affine(&self, input: &[F], pre: &mut Vec<F>) {
        pre.clear();
        for (o, &b) in self.bias.iter().enumerate() {
            let row = self.weights.row(o);
            let mut acc = b;
            for (&w, &x) in row.iter().zip(input) {
                acc += w * x;
            }
            pre.push(acc);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}
