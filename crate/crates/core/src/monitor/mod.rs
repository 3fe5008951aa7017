//! Server-side composition monitor.
//!
//! Probes the previous global model with a small labelled auxiliary set, turns the
//! per-class probe updates into ratio signatures, and inverts the aggregated update into
//! per-class sample-count estimates.

mod aux;
mod detect;
mod diag;
mod estimate;
mod probe;
mod runner;

pub use aux::AuxiliaryData;
pub use detect::{update_detection, Decision, DetectionState, DetectionStatus};
pub use diag::{gradient_dominance, hl_similarity_diagnostic, DominanceStats, HlStats};
pub use estimate::{estimate_counts, CompositionEstimate, EstimateScale, COEFF_EPS};
pub use probe::{
    filter_weights, probe, ratio_matrix, ratio_vector_from, ProbeResult, RatioMatrix, RatioSource,
    DENOM_EPS,
};
pub use runner::{Monitor, MonitorConfig, MonitorRecord, RatioRefresh, ScaleMode};
