use serde::{Deserialize, Serialize};

use super::client::ClientUpdate;
use crate::error::{structural, Result};
use crate::nn::{GradientSet, Matrix, MlpModel};
use crate::scalar::Scalar;

/// What the server-side monitor learns from one aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RoundDelta<F: Scalar> {
    pub round: usize,
    /// `W^{G_{t+1}} − W^{G_t}` on the output link weights (Q×s).
    pub last_layer: Matrix<F>,
    /// `Σ_j Σ_p N_p^j` over the selected clients.
    pub sum_total_samples: usize,
    /// `K`.
    pub clients: usize,
}

/// Unweighted FedAvg over weight deltas.
///
/// Deltas are summed in ascending `client_id` order, so the result does not depend on
/// the order of `updates`.
pub fn fedavg<F: Scalar>(
    updates: &[ClientUpdate<F>],
    global: &MlpModel<F>,
    round: usize,
) -> Result<(MlpModel<F>, RoundDelta<F>)> {
    if updates.is_empty() {
        return Err(structural("fedavg needs at least one update"));
    }
    let mut ordered: Vec<&ClientUpdate<F>> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    if ordered.windows(2).any(|w| w[0].client_id == w[1].client_id) {
        return Err(structural("duplicate client_id among updates"));
    }
    let mut mean = GradientSet::zeros_like(global);
    for u in &ordered {
        if !u.weight_delta.is_congruent(global) {
            return Err(structural(format!(
                "update from client {} is not shape-congruent with the global model",
                u.client_id
            )));
        }
        mean.add_assign(&u.weight_delta)?;
    }
    let k = ordered.len();
    mean.scale(F::one() / F::of_usize(k));
    let mut next = global.clone();
    next.apply_scaled(&mean, F::one())?;
    let last_layer = next.output_weights().sub(global.output_weights())?;
    let sum_total_samples = ordered.iter().map(|u| u.total_samples).sum();
    Ok((
        next,
        RoundDelta {
            round,
            last_layer,
            sum_total_samples,
            clients: k,
        },
    ))
}
