//! Experiment configuration, seeded end-to-end runs, studies and reporting.

mod check;
mod config;
mod run;
mod studies;

pub use check::*;
pub use config::*;
pub use run::*;
pub use studies::*;
