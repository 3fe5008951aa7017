use serde::{Deserialize, Serialize};

use super::aux::AuxiliaryData;
use super::detect::{update_detection, Decision, DetectionState, DetectionStatus};
use super::estimate::{estimate_counts, CompositionEstimate, EstimateScale};
use super::probe::{filter_weights, probe, ratio_matrix, ratio_vector_from, RatioSource};
use crate::data::cosine_similarity;
use crate::error::{config, Result};
use crate::federation::{Mitigation, MonitorHook, RoundConfig, RoundDelta};
use crate::nn::MlpModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    #[default]
    StepMatched,
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// `T_Ra`.
    pub threshold: f64,
    /// `W_d`.
    pub window: usize,
    /// `θ_d`.
    pub similarity: f64,
    /// `Γ_d`.
    pub imbalance: f64,
    pub scale: ScaleMode,
    pub ratio_source: RatioSource,
    pub ratio_refresh: RatioRefresh,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            threshold: 1.25,
            window: 3,
            similarity: 0.95,
            imbalance: 5.0,
            scale: ScaleMode::StepMatched,
            ratio_source: RatioSource::AllValid,
            ratio_refresh: RatioRefresh::FreezeAtLoad,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(config(format!("threshold must be >= 0, got {}", self.threshold)));
        }
        if self.window == 0 {
            return Err(config("window must be >= 1"));
        }
        if !(-1.0..=1.0).contains(&self.similarity) {
            return Err(config(format!("similarity must be in [-1, 1], got {}", self.similarity)));
        }
        if self.imbalance.is_nan() || self.imbalance < 1.0 {
            return Err(config(format!("imbalance must be >= 1, got {}", self.imbalance)));
        }
        Ok(())
    }
}

/// When the broadcast ratio vector is recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatioRefresh {
    /// Every round, from that round's probe.
    EveryRound,
    /// Every round until Ratio Loss is loaded, then held fixed.
    #[default]
    FreezeAtLoad,
}

/// One round of monitor output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub round: usize,
    pub estimate: CompositionEstimate,
    /// `Ra_p` from this round's probe.
    pub ratios: Vec<f64>,
    pub status: DetectionStatus,
    pub decision: Decision,
}

/// The full per-round pipeline, usable as a [`MonitorHook`].
#[derive(Debug, Clone)]
pub struct Monitor<F: Scalar> {
    cfg: MonitorConfig,
    aux: AuxiliaryData<F>,
    learning_rate: f64,
    scale: EstimateScale,
    detection: DetectionState,
    records: Vec<MonitorRecord>,
    frozen: bool,
}

impl<F: Scalar> Monitor<F> {
    pub fn new(cfg: MonitorConfig, aux: AuxiliaryData<F>, round: &RoundConfig) -> Result<Self> {
        cfg.validate()?;
        let scale = match cfg.scale {
            ScaleMode::StepMatched => EstimateScale::StepMatched {
                batch_size: round.batch_size,
                local_epochs: round.local_epochs,
            },
            ScaleMode::Literal => EstimateScale::Literal {
                aux_per_class: aux.count(0),
            },
        };
        Ok(Self {
            detection: DetectionState::new(cfg.window, cfg.similarity, cfg.imbalance),
            cfg,
            aux,
            learning_rate: round.learning_rate,
            scale,
            records: Vec::new(),
            frozen: false,
        })
    }

    pub fn records(&self) -> &[MonitorRecord] {
        &self.records
    }

    pub fn detection(&self) -> &DetectionState {
        &self.detection
    }

    pub fn aux(&self) -> &AuxiliaryData<F> {
        &self.aux
    }

    /// Stores the cosine similarity of the latest estimate to the true composition.
    pub fn annotate_truth(&mut self, truth: &[usize]) -> Option<f64> {
        let rec = self.records.last_mut()?;
        let t: Vec<f64> = truth.iter().map(|&n| n as f64).collect();
        let cs = cosine_similarity(&rec.estimate.counts, &t).ok();
        rec.estimate.cs_vs_truth = cs;
        cs
    }

    /// The ratio vector a probe of `model` yields, without recording a round.
    pub fn ratios_for(&self, model: &MlpModel<F>) -> Result<crate::losses::RatioVector<F>> {
        let pr = probe(model, &self.aux, self.learning_rate)?;
        let ra = ratio_matrix(&pr)?;
        let surviving = filter_weights(&ra, self.cfg.threshold);
        let source = match self.cfg.ratio_source {
            RatioSource::AllValid => None,
            RatioSource::Surviving => Some(surviving.as_slice()),
        };
        ratio_vector_from(&ra, source, 0)
    }

    /// Stops broadcasting fresh ratio vectors when the refresh policy freezes at load.
    pub fn note_ratio_loss_loaded(&mut self) {
        if self.cfg.ratio_refresh == RatioRefresh::FreezeAtLoad {
            self.frozen = true;
        }
    }

    /// Runs probe, ratio, filter, estimate and detection for one round.
    pub fn step(&mut self, g_t: &MlpModel<F>, delta: &RoundDelta<F>) -> Result<&MonitorRecord> {
        let pr = probe(g_t, &self.aux, self.learning_rate)?;
        let ra = ratio_matrix(&pr)?;
        let surviving = filter_weights(&ra, self.cfg.threshold);
        let estimate = estimate_counts(&pr, &ra, &surviving, delta, self.scale)?;
        let decision = update_detection(&mut self.detection, &estimate.counts);
        let source = match self.cfg.ratio_source {
            RatioSource::AllValid => None,
            RatioSource::Surviving => Some(surviving.as_slice()),
        };
        let ratios = ratio_vector_from(&ra, source, delta.round)?;
        self.records.push(MonitorRecord {
            round: delta.round,
            estimate,
            ratios: ratios.ra.iter().map(|v| v.f64()).collect(),
            status: self.detection.status,
            decision,
        });
        Ok(self.records.last().expect("just pushed"))
    }
}

impl<F: Scalar> MonitorHook<F> for Monitor<F> {
    fn observe(&mut self, g_t: &MlpModel<F>, _g_next: &MlpModel<F>, delta: &RoundDelta<F>) -> Result<Mitigation<F>> {
        let frozen = self.frozen;
        let rec = self.step(g_t, delta)?;
        let load = rec.decision == Decision::LoadRatioLoss;
        let ratios = if frozen {
            None
        } else {
            let v = rec.ratios.iter().map(|&v| F::of(v)).collect();
            Some(crate::losses::RatioVector::new(v, delta.round)?)
        };
        if load {
            self.note_ratio_loss_loaded();
        }
        Ok(Mitigation {
            ratios,
            load_ratio_loss: load,
        })
    }
}
