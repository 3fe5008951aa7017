use serde::{Deserialize, Serialize};

use super::probe::{ProbeResult, RatioMatrix};
use crate::error::{config, Result};
use crate::federation::RoundDelta;
use crate::scalar::Scalar;

/// Coefficients `ΔW − ΔW/Ra` below this magnitude drop the weight from the solve.
pub const COEFF_EPS: f64 = 1e-12;

/// Factor applied to the aggregated update before solving for the counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimateScale {
    /// `K · n_batch / N_ep`: a client's local delta is about `N_ep / n_batch` times the sum
    /// of its per-sample probe steps.
    StepMatched { batch_size: usize, local_epochs: usize },
    /// `n_a · K`, with `n_a` the per-class auxiliary count.
    Literal { aux_per_class: usize },
}

impl EstimateScale {
    pub fn factor(&self, clients: usize) -> Result<f64> {
        match *self {
            EstimateScale::StepMatched {
                batch_size,
                local_epochs,
            } => {
                if local_epochs == 0 {
                    return Err(config("step-matched scale needs local_epochs >= 1"));
                }
                Ok(clients as f64 * batch_size as f64 / local_epochs as f64)
            }
            EstimateScale::Literal { aux_per_class } => Ok((aux_per_class * clients) as f64),
        }
    }
}

/// `v_pt` with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionEstimate {
    pub round: usize,
    /// `N̂_p ≥ 0`.
    pub counts: Vec<f64>,
    /// Weights that entered the solve, per class.
    pub surviving: Vec<usize>,
    /// No weight survived; the count is the `total / Q` fallback.
    pub low_confidence: Vec<bool>,
    /// The solved mean was negative and clamped to 0.
    pub clamped: Vec<bool>,
    pub cs_vs_truth: Option<f64>,
}

/// Solves, for each surviving weight `(p, i)`,
///
/// `ΔW·N̂ + (T − N̂)·ΔW/Ra = scale · (W^{t+1} − W^t)`
///
/// with `ΔW = ΔW^(p)_{p,i}` and `T` the round's sample total, then averages over `i`.
pub fn estimate_counts<F: Scalar>(
    probe: &ProbeResult<F>,
    ra: &RatioMatrix<F>,
    surviving: &[Vec<usize>],
    delta: &RoundDelta<F>,
    scale: EstimateScale,
) -> Result<CompositionEstimate> {
    let q = probe.class_count();
    if surviving.len() != q || ra.values.rows() != q {
        return Err(config("probe, ratio and surviving sets disagree on the class count"));
    }
    if delta.last_layer.shape() != probe.per_class[0].shape() {
        return Err(config("round delta does not match the probed output layer"));
    }
    let factor = F::of(scale.factor(delta.clients)?);
    let total = F::of_usize(delta.sum_total_samples);
    let eps = F::of(COEFF_EPS);
    let mut counts = vec![0.0; q];
    let mut used = vec![0usize; q];
    let mut low_confidence = vec![false; q];
    let mut clamped = vec![false; q];
    for p in 0..q {
        let mut sum = F::zero();
        for &i in &surviving[p] {
            let r = ra.get(p, i);
            if !ra.is_valid(p, i) || r == F::zero() {
                continue;
            }
            let dw = probe.per_class[p].get(p, i);
            let other = dw / r;
            let coeff = dw - other;
            if coeff.abs() < eps {
                continue;
            }
            let rhs = factor * delta.last_layer.get(p, i);
            sum += (rhs - total * other) / coeff;
            used[p] += 1;
        }
        if used[p] == 0 {
            low_confidence[p] = true;
            counts[p] = delta.sum_total_samples as f64 / q as f64;
            continue;
        }
        let mean = (sum / F::of_usize(used[p])).f64();
        if mean < 0.0 {
            clamped[p] = true;
            counts[p] = 0.0;
        } else {
            counts[p] = mean;
        }
    }
    Ok(CompositionEstimate {
        round: delta.round,
        counts,
        surviving: used,
        low_confidence,
        clamped,
        cs_vs_truth: None,
    })
}
