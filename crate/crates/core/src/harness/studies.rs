use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{AckAction, AckConfig, ExperimentConfig, SweepAxis};
use super::run::{client_similarities, prepare, prepare_from, load_dataset, run_prepared, RunReport};
use crate::data::ClassRange;
use crate::error::{config, Result};
use crate::losses::LossKind;
use crate::monitor::{hl_similarity_diagnostic, HlStats};

/// One row of `comparison.csv`: a single seed, or the mean over seeds when `seed` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub study: String,
    pub loss: LossKind,
    pub gamma: f64,
    pub classes_min: usize,
    pub classes_max: usize,
    pub ack_round: Option<usize>,
    /// Swept hyperparameter and its value.
    pub axis: Option<String>,
    pub value: Option<f64>,
    pub seed: Option<u64>,
    pub ac_minority: Option<f64>,
    pub ac_majority: Option<f64>,
    pub auc: Option<f64>,
    pub accuracy: Option<f64>,
    pub realized_gamma: f64,
    pub mean_client_cs: f64,
    pub monitor_cs_mean: Option<f64>,
    pub monitor_cs_var: Option<f64>,
}

impl CellRow {
    fn from_report(study: &str, cfg: &ExperimentConfig, report: &RunReport, client_cs: f64) -> Self {
        let cs: Vec<f64> = report.rounds.iter().filter_map(|r| r.cs_vs_truth).collect();
        let (m, v) = mean_var(&cs);
        Self {
            study: study.to_string(),
            loss: cfg.loss.kind,
            gamma: cfg.partition.global_ratio,
            classes_min: cfg.partition.classes_per_client.min,
            classes_max: cfg.partition.classes_per_client.max,
            ack_round: cfg.acknowledgment.as_ref().map(|a| a.round),
            axis: None,
            value: None,
            seed: Some(cfg.seed),
            ac_minority: report.metrics.ac_minority,
            ac_majority: report.metrics.ac_majority,
            auc: report.metrics.auc,
            accuracy: report.metrics.accuracy,
            realized_gamma: report.realized_gamma,
            mean_client_cs: client_cs,
            monitor_cs_mean: m,
            monitor_cs_var: v,
        }
    }
}

fn mean_var(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (Some(m), Some(v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n))
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let xs: Vec<f64> = v.flatten().collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Appends a mean-over-seeds row for `rows`, which must share everything but the seed.
fn mean_row(rows: &[CellRow]) -> CellRow {
    let n = rows.len() as f64;
    CellRow {
        seed: None,
        ac_minority: mean_opt(rows.iter().map(|r| r.ac_minority)),
        ac_majority: mean_opt(rows.iter().map(|r| r.ac_majority)),
        auc: mean_opt(rows.iter().map(|r| r.auc)),
        accuracy: mean_opt(rows.iter().map(|r| r.accuracy)),
        realized_gamma: rows.iter().map(|r| r.realized_gamma).sum::<f64>() / n,
        mean_client_cs: rows.iter().map(|r| r.mean_client_cs).sum::<f64>() / n,
        monitor_cs_mean: mean_opt(rows.iter().map(|r| r.monitor_cs_mean)),
        monitor_cs_var: mean_opt(rows.iter().map(|r| r.monitor_cs_var)),
        ..rows[0].clone()
    }
}

fn seeds(base: &ExperimentConfig, n: usize) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(config("at least one seed is required"));
    }
    Ok((0..n as u64).map(|k| base.seed.wrapping_add(k)).collect())
}

/// Runs `variant(seed)` for every variant and seed; variants sharing a data key reuse the
/// prepared data.
fn run_grid(
    study: &str,
    base: &ExperimentConfig,
    variants: &[ExperimentConfig],
    n_seeds: usize,
    mut annotate: impl FnMut(&ExperimentConfig, &mut CellRow),
) -> Result<Vec<CellRow>> {
    let full = load_dataset(base)?;
    let mut out = Vec::new();
    let mut cache: Vec<(String, super::run::Prepared)> = Vec::new();
    for v in variants {
        let mut per_seed = Vec::new();
        for seed in seeds(v, n_seeds)? {
            let cfg = ExperimentConfig { seed, ..v.clone() };
            let key = format!(
                "{seed}|{}|{:?}|{}|{:?}",
                cfg.partition.global_ratio,
                cfg.partition.classes_per_client,
                cfg.partition.samples_per_class,
                cfg.split
            );
            if !cache.iter().any(|(k, _)| *k == key) {
                cache.push((key.clone(), prepare_from(&cfg, &full)?));
            }
            let p = &cache.iter().find(|(k, _)| *k == key).expect("cached").1;
            let (report, _) = run_prepared(&cfg, p)?;
            let client_cs = mean(&client_similarities(&p.shards)?);
            let mut row = CellRow::from_report(study, &cfg, &report, client_cs);
            annotate(&cfg, &mut row);
            per_seed.push(row);
        }
        let m = mean_row(&per_seed);
        out.extend(per_seed);
        out.push(m);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Every (loss, Γ) cell over `compare.seeds` seeds.
pub fn compare_losses(base: &ExperimentConfig) -> Result<Vec<CellRow>> {
    let c = &base.compare;
    if c.losses.len() < 2 {
        return Err(config("a comparison needs at least two loss kinds"));
    }
    let mut variants = Vec::new();
    for &gamma in &c.gammas {
        for &kind in &c.losses {
            let mut v = base.clone();
            v.partition.global_ratio = gamma;
            v.loss.kind = kind;
            variants.push(v);
        }
    }
    run_grid("compare", base, &variants, c.seeds, |_, _| {})
}

/// Every (classes-per-client range, loss) cell; rows carry the mean client CS.
pub fn mismatch_study(base: &ExperimentConfig) -> Result<Vec<CellRow>> {
    let m = &base.mismatch;
    let mut variants = Vec::new();
    for &range in &m.c_ranges {
        for &kind in &m.losses {
            let mut v = base.clone();
            v.partition.classes_per_client = range;
            v.loss.kind = kind;
            variants.push(v);
        }
    }
    run_grid("mismatch", base, &variants, m.seeds, |_, _| {})
}

/// Balanced replacement at each configured round.
pub fn early_ack_study(base: &ExperimentConfig) -> Result<Vec<CellRow>> {
    let e = &base.early_ack;
    let variants: Vec<_> = e
        .rounds
        .iter()
        .map(|&round| {
            let mut v = base.clone();
            v.acknowledgment = Some(AckConfig {
                round,
                action: AckAction::BalancedReplacement,
                balanced_samples_per_class: base.acknowledgment.as_ref().and_then(|a| a.balanced_samples_per_class),
            });
            v
        })
        .collect();
    for v in &variants {
        v.validate()?;
    }
    run_grid("early_ack", base, &variants, e.seeds, |_, _| {})
}

/// One grid per listed axis. `t_ra` rows report the monitor similarity mean and variance;
/// `alpha`/`beta` rows train with Ratio Loss at `sweep.gamma`.
pub fn sweep(base: &ExperimentConfig) -> Result<Vec<CellRow>> {
    let s = &base.sweep;
    let mut rows = Vec::new();
    for &axis in &s.axes {
        let grid = s.values.clone().unwrap_or_else(|| axis.default_grid());
        let variants: Vec<_> = grid
            .iter()
            .map(|&x| {
                let mut v = base.clone();
                match axis {
                    SweepAxis::TRa => v.monitor.threshold = x,
                    SweepAxis::Alpha => {
                        v.loss.kind = LossKind::Ratio;
                        v.loss.alpha = x;
                        v.partition.global_ratio = s.gamma;
                    }
                    SweepAxis::Beta => {
                        v.loss.kind = LossKind::Ratio;
                        v.loss.beta = x;
                        v.partition.global_ratio = s.gamma;
                    }
                }
                v
            })
            .collect();
        rows.extend(run_grid("sweep", base, &variants, s.seeds, |cfg, row| {
            row.axis = Some(axis.name().to_string());
            row.value = Some(match axis {
                SweepAxis::TRa => cfg.monitor.threshold,
                SweepAxis::Alpha => cfg.loss.alpha,
                SweepAxis::Beta => cfg.loss.beta,
            });
        })?);
    }
    Ok(rows)
}

/// Per-round monitor accuracy of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub mean_cs: f64,
    /// Smallest per-round similarity over rounds after the second.
    pub min_cs_after_round_2: Option<f64>,
    pub rounds: usize,
}

pub fn monitor_eval(cfg: &ExperimentConfig) -> Result<(RunReport, MonitorSummary)> {
    let p = prepare(cfg)?;
    let (report, _) = run_prepared(cfg, &p)?;
    let cs: Vec<f64> = report.rounds.iter().filter_map(|r| r.cs_vs_truth).collect();
    if cs.len() != report.rounds.len() {
        return Err(config("some round has an undefined similarity"));
    }
    let summary = MonitorSummary {
        mean_cs: mean(&cs),
        min_cs_after_round_2: report
            .rounds
            .iter()
            .filter(|r| r.round > 2)
            .filter_map(|r| r.cs_vs_truth)
            .reduce(f64::min),
        rounds: cs.len(),
    };
    Ok((report, summary))
}

/// Trains, then measures hidden-layer output similarity per class on the test set.
pub fn diag_hl(cfg: &ExperimentConfig) -> Result<(RunReport, Vec<HlStats>)> {
    let p = prepare(cfg)?;
    let (report, model) = run_prepared(cfg, &p)?;
    let stats = hl_similarity_diagnostic(&model, &p.test, cfg.diag.per_class)?;
    Ok((report, stats))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_comparison_csv(rows: &[CellRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "study",
        "loss",
        "gamma",
        "classes_min",
        "classes_max",
        "ack_round",
        "axis",
        "value",
        "seed",
        "ac_minority",
        "ac_majority",
        "auc",
        "accuracy",
        "realized_gamma",
        "mean_client_cs",
        "monitor_cs_mean",
        "monitor_cs_var",
    ])?;
    for r in rows {
        w.write_record([
            r.study.clone(),
            r.loss.to_string(),
            r.gamma.to_string(),
            r.classes_min.to_string(),
            r.classes_max.to_string(),
            r.ack_round.map(|x| x.to_string()).unwrap_or_default(),
            r.axis.clone().unwrap_or_default(),
            r.value.map(|x| x.to_string()).unwrap_or_default(),
            r.seed.map(|s| s.to_string()).unwrap_or_else(|| "mean".into()),
            opt(r.ac_minority),
            opt(r.ac_majority),
            opt(r.auc),
            opt(r.accuracy),
            format!("{:.6}", r.realized_gamma),
            format!("{:.6}", r.mean_client_cs),
            opt(r.monitor_cs_mean),
            r.monitor_cs_var.map(|x| format!("{x:.6e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_hl_csv(stats: &[HlStats], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "samples", "mean_cs", "cov"])?;
    for s in stats {
        w.write_record([
            s.class.to_string(),
            s.samples.to_string(),
            format!("{:.6}", s.mean_cs),
            format!("{:.6}", s.cov),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The mean row of `rows` matching `pred`.
pub fn find_mean(rows: &[CellRow], pred: impl Fn(&CellRow) -> bool) -> Option<&CellRow> {
    rows.iter().find(|r| r.seed.is_none() && pred(r))
}

pub fn range_matches(r: &CellRow, range: ClassRange) -> bool {
    r.classes_min == range.min && r.classes_max == range.max
}
