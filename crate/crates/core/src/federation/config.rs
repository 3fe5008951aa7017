use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::seed::{derive, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// The round-1 draw is reused every round.
    FixedFirstRound,
    #[default]
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundConfig {
    pub clients_total: usize,
    /// `K`.
    pub clients_selected: usize,
    /// `N_ep`.
    pub local_epochs: usize,
    pub batch_size: usize,
    /// `λ`.
    pub learning_rate: f64,
    pub rounds_total: usize,
    pub selection: Selection,
    /// Set by the experiment runner from its master seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            clients_total: 100,
            clients_selected: 20,
            local_epochs: 1,
            batch_size: 32,
            learning_rate: 0.001,
            rounds_total: 30,
            selection: Selection::UniformRandom,
            seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients_selected == 0 || self.clients_selected > self.clients_total {
            return Err(config(format!(
                "clients_selected must be in 1..={}, got {}",
                self.clients_total, self.clients_selected
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(config("batch_size must be >= 1"));
        }
        Ok(())
    }
}

/// The `K` client ids taking part in `round` (1-based), ascending.
pub fn select_clients(round: usize, cfg: &RoundConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let effective = match cfg.selection {
        Selection::FixedFirstRound => 1,
        Selection::UniformRandom => round,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[stream::SELECTION, effective as u64]));
    let mut ids = sample(&mut rng, cfg.clients_total, cfg.clients_selected).into_vec();
    ids.sort_unstable();
    Ok(ids)
}
