use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{AckAction, AckConfig, DatasetSpec, ExperimentConfig, Metric};
use crate::data::{
    composition, global_imbalance, load_mnist_idx, make_synthetic_from, partition, ClassRange, ClientShard, Dataset,
    PartitionPlan, SyntheticSpec,
};
use crate::error::{config, Result};
use crate::federation::Federation;
use crate::losses::LossKind;
use crate::metrics::{ac_majority, ac_minority, accuracy, auc_macro_ovr, predict_all};
use crate::monitor::{AuxiliaryData, Decision, DetectionStatus, Monitor};
use crate::nn::{init_model, MlpModel};
use crate::seed::stream;

/// How the AUC reported here is reduced over classes.
pub const AUC_REDUCTION: &str = "macro-averaged one-vs-rest ROC AUC (Mann-Whitney rank statistic, ties 0.5)";

/// Data of one run after splitting and partitioning.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Pool the client shards index into.
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub aux: AuxiliaryData<f64>,
    pub shards: Vec<ClientShard>,
    /// Original-dataset index of every train, test and auxiliary sample.
    pub train_source: Vec<usize>,
    pub test_source: Vec<usize>,
    pub aux_source: Vec<usize>,
}

impl Prepared {
    pub fn class_count(&self) -> usize {
        self.train.class_count()
    }

    /// No source index is shared between the client shards, the test set and the
    /// auxiliary set.
    pub fn isolation_holds(&self) -> bool {
        let test: HashSet<usize> = self.test_source.iter().copied().collect();
        let aux: HashSet<usize> = self.aux_source.iter().copied().collect();
        test.is_disjoint(&aux)
            && self
                .shards
                .iter()
                .flat_map(|s| &s.indices)
                .map(|&i| self.train_source[i])
                .all(|i| !test.contains(&i) && !aux.contains(&i))
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    match &cfg.dataset {
        DatasetSpec::Synthetic(s) => make_synthetic_from(&SyntheticSpec {
            class_count: s.class_count,
            dim: s.dim,
            per_class: s.per_class,
            separation: s.separation,
            noise_std: s.noise_std,
            seed: s.seed.unwrap_or_else(|| cfg.stream_seed(stream::DATA)),
        }),
        DatasetSpec::MnistIdx(m) => load_mnist_idx(cfg.resolve(&m.images), cfg.resolve(&m.labels)),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    prepare_from(cfg, &load_dataset(cfg)?)
}

/// Splits an already loaded dataset into test, auxiliary and client data.
pub fn prepare_from(cfg: &ExperimentConfig, full: &Dataset<f64>) -> Result<Prepared> {
    cfg.validate()?;
    let split_seed = cfg.stream_seed(stream::SPLIT);
    let (test_source, rest) = full.stratified_split(cfg.split.test_per_class, split_seed)?;
    let pool = full.subset(&rest)?;
    let (aux_local, train_local) = pool.stratified_split(cfg.split.aux_per_class, split_seed ^ 1)?;
    let aux_source: Vec<usize> = aux_local.iter().map(|&i| rest[i]).collect();
    let train_source: Vec<usize> = train_local.iter().map(|&i| rest[i]).collect();
    let aux = AuxiliaryData::from_indices(full, &aux_source, "held-out per-class sample of the training source")?;
    let train = full.subset(&train_source)?;
    let test = full.subset(&test_source)?;
    let shards = partition(&train, &cfg.partition.plan(cfg.stream_seed(stream::PARTITION)))?;
    Ok(Prepared {
        train,
        test,
        aux,
        shards,
        train_source,
        test_source,
        aux_source,
    })
}

/// Class-balanced shards of the same pool: every client holds every class equally.
pub fn balanced_shards(cfg: &ExperimentConfig, p: &Prepared, ack: &AckConfig) -> Result<Vec<ClientShard>> {
    let q = p.class_count();
    let n = cfg.partition.num_clients;
    let fit = p.train.class_counts().into_iter().min().unwrap_or(0) / n;
    let per = ack
        .balanced_samples_per_class
        .unwrap_or_else(|| fit.min(cfg.partition.samples_per_class));
    if per == 0 {
        return Err(config("training pool too small for a balanced replacement"));
    }
    partition(
        &p.train,
        &PartitionPlan {
            num_clients: n,
            classes_per_client: ClassRange::fixed(q),
            samples_per_class: per,
            global_ratio: 1.0,
            minority_classes: Vec::new(),
            trim_to_available: false,
            seed: cfg.stream_seed(stream::PARTITION) ^ 1,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub loss_used: LossKind,
    pub mean_client_loss: f64,
    /// Ground-truth class totals over the selected clients.
    pub composition: Vec<usize>,
    pub estimate: Vec<f64>,
    pub cs_vs_truth: Option<f64>,
    pub surviving: Vec<usize>,
    pub low_confidence: usize,
    pub ratios: Vec<f64>,
    pub status: DetectionStatus,
    pub decision: Decision,
    pub ratio_loss_loaded: bool,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub ac_minority: Option<f64>,
    pub ac_majority: Option<f64>,
    pub auc: Option<f64>,
    /// Classes left out of the AUC average for lack of positives or negatives.
    pub auc_skipped: Vec<usize>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub auc_reduction: String,
    pub target_gamma: f64,
    /// Global ratio over all client shards at the start of training.
    pub realized_gamma: f64,
    pub minority_classes: Vec<usize>,
    pub rounds: Vec<RoundReport>,
    pub metrics: FinalMetrics,
    /// First round trained with Ratio Loss.
    pub ratio_loss_from: Option<usize>,
    pub acknowledged_at: Option<usize>,
    pub isolation_holds: bool,
    pub config: ExperimentConfig,
    pub wall_time_secs: f64,
}

impl RunReport {
    /// JSON with the wall time zeroed, stable across identical runs.
    pub fn canonical_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_time_secs = 0.0;
        Ok(serde_json::to_string_pretty(&r)?)
    }

    pub fn mean_cs(&self) -> Option<f64> {
        let v: Vec<f64> = self.rounds.iter().filter_map(|r| r.cs_vs_truth).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Writes `report.json` and `rounds.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        write_rounds_csv(&self.rounds, &dir.join("rounds.csv"))
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

pub fn write_rounds_csv(rounds: &[RoundReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "round",
        "loss_used",
        "mean_client_loss",
        "composition",
        "estimate",
        "cs_vs_truth",
        "surviving",
        "low_confidence",
        "ratios",
        "status",
        "decision",
        "ratio_loss_loaded",
    ])?;
    for r in rounds {
        let est: Vec<String> = r.estimate.iter().map(|v| format!("{v:.3}")).collect();
        let ra: Vec<String> = r.ratios.iter().map(|v| format!("{v:.6}")).collect();
        w.write_record([
            r.round.to_string(),
            r.loss_used.to_string(),
            format!("{:.6}", r.mean_client_loss),
            join(&r.composition),
            est.join(";"),
            r.cs_vs_truth.map(|c| format!("{c:.6}")).unwrap_or_default(),
            join(&r.surviving),
            r.low_confidence.to_string(),
            ra.join(";"),
            format!("{:?}", r.status).to_lowercase(),
            format!("{:?}", r.decision).to_lowercase(),
            r.ratio_loss_loaded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let p = prepare(cfg)?;
    run_prepared(cfg, &p).map(|(r, _)| r)
}

/// Trains on prepared data, returning the report and the final global model.
pub fn run_prepared(cfg: &ExperimentConfig, p: &Prepared) -> Result<(RunReport, MlpModel<f64>)> {
    let started = Instant::now();
    let q = p.class_count();
    let loss = cfg.loss_config();
    loss.validate(q)?;
    let round_cfg = cfg.round_config();
    let model = init_model(&cfg.model.spec(p.train.dim(), q), cfg.stream_seed(stream::INIT))?;
    let mut monitor = Monitor::new(cfg.monitor.clone(), p.aux.clone(), &round_cfg)?;
    let mut fed = Federation::new(&p.train, p.shards.clone(), round_cfg.clone(), loss, model)?;
    let mut rounds = Vec::with_capacity(round_cfg.rounds_total);
    let mut ratio_loss_from = None;
    for round in 1..=round_cfg.rounds_total {
        if let Some(ack) = cfg.acknowledgment.as_ref().filter(|a| a.round == round) {
            match ack.action {
                AckAction::BalancedReplacement => fed.replace_shards(balanced_shards(cfg, p, ack)?)?,
                AckAction::LoadRatioLoss => {
                    if fed.ratios().is_none() {
                        fed.set_ratios(monitor.ratios_for(fed.global())?)?;
                    }
                    fed.load_ratio_loss();
                    monitor.note_ratio_loss_loaded();
                }
            }
        }
        let rec = fed.run_round(Some(&mut monitor))?;
        let cs = monitor.annotate_truth(&rec.composition);
        let m = monitor.records().last().expect("monitor ran");
        if rec.loss_used == LossKind::Ratio && ratio_loss_from.is_none() {
            ratio_loss_from = Some(round);
        }
        rounds.push(RoundReport {
            round,
            loss_used: rec.loss_used,
            mean_client_loss: rec.mean_client_loss,
            composition: rec.composition,
            estimate: m.estimate.counts.clone(),
            cs_vs_truth: cs,
            surviving: m.estimate.surviving.clone(),
            low_confidence: m.estimate.low_confidence.iter().filter(|&&b| b).count(),
            ratios: m.ratios.clone(),
            status: m.status,
            decision: m.decision,
            ratio_loss_loaded: rec.ratio_loss_loaded,
            clamped: rec.clamped,
        });
    }
    let minority = cfg.partition.minority_classes.clone();
    let scores = predict_all(fed.global(), &p.test)?;
    let labels = p.test.labels();
    let (auc, auc_skipped) = if cfg.wants(Metric::Auc) {
        let (a, s) = auc_macro_ovr(&scores, labels)?;
        (Some(a), s)
    } else {
        (None, Vec::new())
    };
    let metrics = FinalMetrics {
        ac_minority: (cfg.wants(Metric::AcMinority) && !minority.is_empty())
            .then(|| ac_minority(&scores, labels, &minority))
            .transpose()?,
        ac_majority: cfg
            .wants(Metric::AcMajority)
            .then(|| ac_majority(&scores, labels, &minority))
            .transpose()?,
        auc,
        auc_skipped,
        accuracy: cfg.wants(Metric::Accuracy).then(|| accuracy(&scores, labels)),
    };
    let report = RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        auc_reduction: AUC_REDUCTION.to_string(),
        target_gamma: cfg.partition.global_ratio,
        realized_gamma: global_imbalance(&p.shards)?,
        minority_classes: minority,
        rounds,
        metrics,
        ratio_loss_from,
        acknowledged_at: cfg.acknowledgment.as_ref().map(|a| a.round),
        isolation_holds: p.isolation_holds(),
        config: cfg.clone(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((report, fed.global().clone()))
}

/// Cosine similarity of each client's class vector to the all-client composition.
pub fn client_similarities(shards: &[ClientShard]) -> Result<Vec<f64>> {
    let global: Vec<f64> = composition(shards)?.into_iter().map(|n| n as f64).collect();
    shards
        .iter()
        .map(|s| {
            let local: Vec<f64> = s.per_class_counts.iter().map(|&n| n as f64).collect();
            crate::data::cosine_similarity(&local, &global)
        })
        .collect()
}
