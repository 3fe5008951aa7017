use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::cosine_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionStatus {
    Quiet,
    Alerted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    NoAction,
    LoadRatioLoss,
}

/// Counts consecutive rounds whose estimate is imbalanced and close to the previous one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionState {
    /// Up to `window` most recent estimates.
    pub history: VecDeque<Vec<f64>>,
    pub consecutive_hits: usize,
    /// `W_d`.
    pub window: usize,
    /// `θ_d`.
    pub similarity: f64,
    /// `Γ_d`.
    pub imbalance: f64,
    pub status: DetectionStatus,
    last_imbalanced: Option<Vec<f64>>,
}

impl DetectionState {
    pub fn new(window: usize, similarity: f64, imbalance: f64) -> Self {
        Self {
            history: VecDeque::new(),
            consecutive_hits: 0,
            window: window.max(1),
            similarity,
            imbalance,
            status: DetectionStatus::Quiet,
            last_imbalanced: None,
        }
    }
}

impl Default for DetectionState {
    fn default() -> Self {
        Self::new(3, 0.95, 5.0)
    }
}

fn is_imbalanced(v: &[f64], threshold: f64) -> bool {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if max <= 0.0 {
        return false;
    }
    min <= 0.0 || max / min >= threshold
}

/// Advances the detector by one round's estimate.
pub fn update_detection(state: &mut DetectionState, estimate: &[f64]) -> Decision {
    state.history.push_back(estimate.to_vec());
    while state.history.len() > state.window {
        state.history.pop_front();
    }
    if !is_imbalanced(estimate, state.imbalance) {
        state.consecutive_hits = 0;
        state.last_imbalanced = None;
    } else {
        let similar = state
            .last_imbalanced
            .as_deref()
            .and_then(|prev| cosine_similarity(prev, estimate).ok())
            .is_some_and(|cs| cs >= state.similarity);
        state.consecutive_hits = if similar { state.consecutive_hits + 1 } else { 1 };
        state.last_imbalanced = Some(estimate.to_vec());
    }
    if state.consecutive_hits >= state.window {
        state.status = DetectionStatus::Alerted;
        Decision::LoadRatioLoss
    } else {
        Decision::NoAction
    }
}
