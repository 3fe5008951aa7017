use serde::{Deserialize, Serialize};

use super::aggregate::{fedavg, RoundDelta};
use super::client::local_train_with_stats;
use super::config::{select_clients, RoundConfig};
use crate::data::{ClientShard, Dataset};
use crate::error::{config, Result};
use crate::losses::{LossConfig, LossKind, RatioVector};
use crate::nn::MlpModel;
use crate::scalar::Scalar;

/// Server-side observer invoked once per round after aggregation.
pub trait MonitorHook<F: Scalar> {
    /// `g_t` is the model the clients trained from, `g_next` the aggregated one.
    fn observe(
        &mut self,
        g_t: &MlpModel<F>,
        g_next: &MlpModel<F>,
        delta: &RoundDelta<F>,
    ) -> Result<Mitigation<F>>;
}

/// The hook's instructions for the next round.
#[derive(Debug, Clone, PartialEq)]
pub struct Mitigation<F: Scalar> {
    /// Replaces the broadcast ratio vector when present.
    pub ratios: Option<RatioVector<F>>,
    /// Switch a configured Ratio Loss on from the next round.
    pub load_ratio_loss: bool,
}

impl<F: Scalar> Default for Mitigation<F> {
    fn default() -> Self {
        Self {
            ratios: None,
            load_ratio_loss: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub selected: Vec<usize>,
    /// Mean over the selected clients of their mean batch loss.
    pub mean_client_loss: f64,
    /// Ground-truth class totals over the selected shards.
    pub composition: Vec<usize>,
    /// Loss the clients actually optimised this round.
    pub loss_used: LossKind,
    pub clamped: bool,
    pub ratio_loss_loaded: bool,
}

/// A simulated federation: client shards over one dataset plus the global model state.
#[derive(Debug, Clone)]
pub struct Federation<'a, F: Scalar> {
    data: &'a Dataset<F>,
    shards: Vec<ClientShard>,
    cfg: RoundConfig,
    loss: LossConfig,
    global: MlpModel<F>,
    previous: Option<MlpModel<F>>,
    ratios: Option<RatioVector<F>>,
    ratio_loss_loaded: bool,
    completed: usize,
}

impl<'a, F: Scalar> Federation<'a, F> {
    pub fn new(
        data: &'a Dataset<F>,
        shards: Vec<ClientShard>,
        cfg: RoundConfig,
        loss: LossConfig,
        initial: MlpModel<F>,
    ) -> Result<Self> {
        cfg.validate()?;
        loss.validate(data.class_count())?;
        check_shards(&shards, &cfg)?;
        if initial.input_dim() != data.dim() || initial.class_count() != data.class_count() {
            return Err(config(format!(
                "model is {}→{} but the data is {}-dimensional with {} classes",
                initial.input_dim(),
                initial.class_count(),
                data.dim(),
                data.class_count()
            )));
        }
        Ok(Self {
            data,
            shards,
            cfg,
            loss,
            global: initial,
            previous: None,
            ratios: None,
            ratio_loss_loaded: false,
            completed: 0,
        })
    }

    pub fn global(&self) -> &MlpModel<F> {
        &self.global
    }

    /// `G_t` of the most recent round.
    pub fn previous(&self) -> Option<&MlpModel<F>> {
        self.previous.as_ref()
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    pub fn config(&self) -> &RoundConfig {
        &self.cfg
    }

    pub fn rounds_completed(&self) -> usize {
        self.completed
    }

    pub fn ratios(&self) -> Option<&RatioVector<F>> {
        self.ratios.as_ref()
    }

    pub fn ratio_loss_loaded(&self) -> bool {
        self.ratio_loss_loaded
    }

    /// Loads a configured Ratio Loss without waiting for the monitor.
    pub fn load_ratio_loss(&mut self) {
        self.ratio_loss_loaded = true;
    }

    pub fn set_ratios(&mut self, ratios: RatioVector<F>) -> Result<()> {
        if ratios.len() != self.data.class_count() {
            return Err(config(format!(
                "ratio vector has {} entries for {} classes",
                ratios.len(),
                self.data.class_count()
            )));
        }
        self.ratios = Some(ratios);
        Ok(())
    }

    /// Swaps the client data, keeping the model.
    pub fn replace_shards(&mut self, shards: Vec<ClientShard>) -> Result<()> {
        check_shards(&shards, &self.cfg)?;
        self.shards = shards;
        Ok(())
    }

    /// The loss clients use next round. A configured Ratio Loss falls back to CE until it
    /// is loaded and a ratio vector is available.
    pub fn effective_loss(&self) -> LossKind {
        match self.loss.kind {
            LossKind::Ratio if !(self.ratio_loss_loaded && self.ratios.is_some()) => LossKind::Ce,
            k => k,
        }
    }

    /// Select, broadcast, train locally, aggregate, then let the hook observe.
    pub fn run_round(&mut self, hook: Option<&mut dyn MonitorHook<F>>) -> Result<RoundRecord> {
        let round = self.completed + 1;
        let selected = select_clients(round, &self.cfg)?;
        let loss_used = self.effective_loss();
        let loss_cfg = LossConfig {
            kind: loss_used,
            ..self.loss.clone()
        };
        let ratios = match loss_used {
            LossKind::Ratio => self.ratios.as_ref(),
            _ => None,
        };
        let mut updates = Vec::with_capacity(selected.len());
        let mut loss_sum = 0.0;
        let mut clamped = false;
        let mut composition = vec![0usize; self.data.class_count()];
        for &id in &selected {
            let shard = &self.shards[id];
            let (u, stats) = local_train_with_stats(
                &self.global,
                self.data,
                shard,
                &loss_cfg,
                ratios,
                &self.cfg,
                round,
            )?;
            loss_sum += stats.mean_loss;
            clamped |= stats.clamped;
            for (c, n) in composition.iter_mut().zip(&shard.per_class_counts) {
                *c += n;
            }
            updates.push(u);
        }
        let (next, delta) = fedavg(&updates, &self.global, round)?;
        let g_t = std::mem::replace(&mut self.global, next);
        if let Some(h) = hook {
            let m = h.observe(&g_t, &self.global, &delta)?;
            if let Some(r) = m.ratios {
                self.set_ratios(r)?;
            }
            self.ratio_loss_loaded |= m.load_ratio_loss;
        }
        self.previous = Some(g_t);
        self.completed = round;
        Ok(RoundRecord {
            round,
            mean_client_loss: loss_sum / selected.len() as f64,
            selected,
            composition,
            loss_used,
            clamped,
            ratio_loss_loaded: self.ratio_loss_loaded,
        })
    }
}

fn check_shards(shards: &[ClientShard], cfg: &RoundConfig) -> Result<()> {
    if shards.len() != cfg.clients_total {
        return Err(config(format!(
            "{} shards for clients_total = {}",
            shards.len(),
            cfg.clients_total
        )));
    }
    if let Some((j, s)) = shards.iter().enumerate().find(|(j, s)| s.client_id != *j) {
        return Err(config(format!("shard at position {j} has client_id {}", s.client_id)));
    }
    if let Some(s) = shards.iter().find(|s| s.total == 0) {
        return Err(config(format!("client {} has an empty shard", s.client_id)));
    }
    Ok(())
}
