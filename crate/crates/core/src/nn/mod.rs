//! Feed-forward softmax classifier with analytic backprop and plain SGD.

mod grad;
mod layer;
mod matrix;
mod model;
pub mod snapshot;

pub use grad::{last_layer_gradient, GradientSet, LayerGrad};
pub use layer::{Activation, DenseLayer};
pub use matrix::Matrix;
pub use model::{init_model, softmax, ForwardTrace, MlpModel, ModelSpec};
pub(crate) use model::argmax;
