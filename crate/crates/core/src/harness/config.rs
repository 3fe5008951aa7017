use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ClassRange, PartitionPlan};
use crate::error::{config, Result};
use crate::federation::RoundConfig;
use crate::losses::{LossConfig, LossKind};
use crate::monitor::MonitorConfig;
use crate::nn::{Activation, ModelSpec};
use crate::seed::{derive, stream};

/// Gaussian blobs generated in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub class_count: usize,
    pub dim: usize,
    pub per_class: usize,
    pub separation: f64,
    #[serde(default = "one")]
    pub noise_std: f64,
    /// Fixed data seed; derived from the master seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// IDX image/label files (optionally gzipped). Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxData {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticData),
    MnistIdx(IdxData),
}

fn one() -> f64 {
    1.0
}

/// Per-class sizes of the held-out test set and the monitor's auxiliary set.
/// Both are drawn before the client partition and never overlap it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_per_class: usize,
    pub aux_per_class: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_per_class: 100,
            aux_per_class: 32,
        }
    }
}

/// [`PartitionPlan`] without its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub num_clients: usize,
    pub classes_per_client: ClassRange,
    pub samples_per_class: usize,
    pub global_ratio: f64,
    pub minority_classes: Vec<usize>,
    pub trim_to_available: bool,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            num_clients: 100,
            classes_per_client: ClassRange::new(3, 6),
            samples_per_class: 64,
            global_ratio: 1.0,
            minority_classes: Vec::new(),
            trim_to_available: false,
        }
    }
}

impl PartitionConfig {
    pub fn plan(&self, seed: u64) -> PartitionPlan {
        PartitionPlan {
            num_clients: self.num_clients,
            classes_per_client: self.classes_per_client,
            samples_per_class: self.samples_per_class,
            global_ratio: self.global_ratio,
            minority_classes: self.minority_classes.clone(),
            trim_to_available: self.trim_to_available,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, input_dim: usize, class_count: usize) -> ModelSpec {
        ModelSpec {
            input_dim,
            hidden: self.hidden.clone(),
            activation: self.activation,
            class_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckAction {
    /// Swap every client's data for a class-balanced shard of the same pool.
    BalancedReplacement,
    /// Switch a configured Ratio Loss on without waiting for detection.
    LoadRatioLoss,
}

/// Forces acknowledgment of the imbalance before round `round` trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AckConfig {
    pub round: usize,
    pub action: AckAction,
    /// Per-class samples of each balanced shard; the largest feasible value when absent.
    #[serde(default)]
    pub balanced_samples_per_class: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AcMinority,
    AcMajority,
    Auc,
    Accuracy,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::AcMinority, Metric::AcMajority, Metric::Auc, Metric::Accuracy];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub losses: Vec<LossKind>,
    pub gammas: Vec<f64>,
    pub seeds: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            losses: vec![LossKind::Ce, LossKind::Focal, LossKind::Ghmc, LossKind::Ratio],
            gammas: vec![1.0, 10.0, 50.0, 100.0],
            seeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchConfig {
    pub c_ranges: Vec<ClassRange>,
    pub losses: Vec<LossKind>,
    pub seeds: usize,
}

impl Default for MismatchConfig {
    fn default() -> Self {
        Self {
            c_ranges: vec![ClassRange::fixed(2), ClassRange::fixed(5)],
            losses: vec![LossKind::Ce, LossKind::Mfe, LossKind::Ratio],
            seeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyAckConfig {
    pub rounds: Vec<usize>,
    pub seeds: usize,
}

impl Default for EarlyAckConfig {
    fn default() -> Self {
        Self {
            rounds: vec![10, 30, 45],
            seeds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TRa,
    Alpha,
    Beta,
}

impl SweepAxis {
    /// The calibration grid for this axis.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::TRa => vec![1.0, 1.05, 1.1, 1.15, 1.2, 1.25, 1.3, 1.4, 1.5, 2.0, 5.0],
            SweepAxis::Alpha => vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 3.0, 5.0],
            SweepAxis::Beta => vec![0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.15, 0.2, 0.3],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TRa => "t_ra",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: Vec<SweepAxis>,
    /// Overrides the built-in grid for every listed axis.
    pub values: Option<Vec<f64>>,
    pub seeds: usize,
    /// Global ratio used for the α and β sweeps.
    pub gamma: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axes: vec![SweepAxis::TRa, SweepAxis::Alpha, SweepAxis::Beta],
            values: None,
            seeds: 1,
            gamma: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagConfig {
    /// Samples per class entering the pairwise statistics.
    pub per_class: usize,
}

impl Default for DiagConfig {
    fn default() -> Self {
        Self { per_class: 64 }
    }
}

/// Everything a run depends on. A run is a pure function of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    /// Master seed; every random stream is derived from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub rounds: RoundConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub acknowledgment: Option<AckConfig>,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub mismatch: MismatchConfig,
    #[serde(default)]
    pub early_ack: EarlyAckConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub diag: DiagConfig,
    /// Directory relative data paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn all_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// A config around `dataset` with every other section at its default.
    pub fn with_dataset(dataset: DatasetSpec) -> Self {
        Self {
            name: String::new(),
            seed: 0,
            out_dir: default_out_dir(),
            dataset,
            split: SplitConfig::default(),
            partition: PartitionConfig::default(),
            rounds: RoundConfig::default(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            monitor: MonitorConfig::default(),
            acknowledgment: None,
            metrics: all_metrics(),
            compare: CompareConfig::default(),
            mismatch: MismatchConfig::default(),
            early_ack: EarlyAckConfig::default(),
            sweep: SweepConfig::default(),
            diag: DiagConfig::default(),
            base_dir: PathBuf::new(),
        }
    }

    /// Checks that do not need the data loaded.
    pub fn validate(&self) -> Result<()> {
        let mut rounds = self.rounds.clone();
        rounds.seed = 0;
        rounds.validate()?;
        if self.rounds.clients_total != self.partition.num_clients {
            return Err(config(format!(
                "rounds.clients_total ({}) must equal partition.num_clients ({})",
                self.rounds.clients_total, self.partition.num_clients
            )));
        }
        if self.rounds.rounds_total == 0 {
            return Err(config("rounds_total must be >= 1"));
        }
        if self.split.aux_per_class == 0 {
            return Err(config("aux_per_class must be >= 1"));
        }
        if let Some(ack) = &self.acknowledgment {
            if ack.round == 0 || ack.round > self.rounds.rounds_total {
                return Err(config(format!(
                    "acknowledgment round {} outside 1..={}",
                    ack.round, self.rounds.rounds_total
                )));
            }
        }
        self.monitor.validate()?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Seed of the named stream.
    pub fn stream_seed(&self, stream: u64) -> u64 {
        derive(self.seed, &[stream])
    }

    /// Round config carrying the derived selection/training seed.
    pub fn round_config(&self) -> RoundConfig {
        RoundConfig {
            seed: self.stream_seed(stream::SELECTION),
            ..self.rounds.clone()
        }
    }

    /// Loss config with MFE's positive set defaulting to the minority classes.
    pub fn loss_config(&self) -> LossConfig {
        let mut l = self.loss.clone();
        if l.minority_set.is_none() && !self.partition.minority_classes.is_empty() {
            l.minority_set = Some(self.partition.minority_classes.clone());
        }
        l
    }

    pub fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
