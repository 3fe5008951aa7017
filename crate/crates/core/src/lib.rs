//! Federated-learning simulation with gradient-based monitoring of the global class
//! composition and Ratio Loss mitigation of class imbalance.
//!
//! The numerical core (model, losses, monitor algebra) is generic over [`Scalar`]
//! (`f32`/`f64`); the aliases at the crate root fix it to `f64`, which is what the
//! simulator and the CLI use.

pub mod data;
pub mod error;
pub mod federation;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod monitor;
pub mod nn;
pub mod scalar;
pub mod seed;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = nn::MlpModel<f64>;
pub type Trace = nn::ForwardTrace<f64>;
pub type Gradients = nn::GradientSet<f64>;
