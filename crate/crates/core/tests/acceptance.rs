//! End-to-end acceptance criteria. Each test writes one `criterion N [PASS|FAIL]` line to
//! stderr (uncaptured) and then asserts.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use common::{fd_relative_error, planted_roundtrip, random_model, identical_hidden_gap};
use ratiofl::harness::{
    early_ack_study, mismatch_study, monitor_eval, prepare, run_prepared, sweep, write_comparison_csv, ExperimentConfig,
    RunReport, SweepAxis,
};
use ratiofl::losses::{LossConfig, LossKind};
use ratiofl::monitor::{gradient_dominance, Monitor, MonitorConfig};

/// Serializes the training-heavy criteria so their wall-clock budgets are not shared.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn preset(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn verdict(n: u32, what: &str, pass: bool, detail: String) {
    let line = format!("criterion {n:>2} [{}] {what}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_01_monitor_accuracy() {
    let _g = heavy();
    let t = Instant::now();
    let (report, s) = monitor_eval(&preset("monitor_synthetic.toml")).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let min = s.min_cs_after_round_2.unwrap();
    verdict(
        1,
        "monitor accuracy",
        s.mean_cs >= 0.97 && min >= 0.95 && secs <= 300.0 && report.rounds.len() == 30,
        format!("mean CS {:.4} (>= 0.97), min CS after round 2 {min:.4} (>= 0.95), {secs:.1}s", s.mean_cs),
    );
}

#[test]
fn criterion_02_composition_round_trip() {
    let worst = (0..1000).map(planted_roundtrip).fold(0.0, f64::max);
    verdict(2, "planted count round trip", worst <= 1e-9, format!("max relative error {worst:.2e} over 1000 instances"));
}

#[test]
fn criterion_03_identical_hidden_outputs() {
    let worst = (0..100).map(identical_hidden_gap).fold(0.0, f64::max);
    verdict(3, "identical-Y last-layer gradients", worst <= 1e-12, format!("max gap {worst:.2e} over 100 models"));
}

#[test]
fn criterion_04_gradient_oracle() {
    let worst = (0..20).map(|s| fd_relative_error(&random_model(1000 + s), s)).fold(0.0, f64::max);
    verdict(4, "backprop vs finite differences", worst < 1e-4, format!("max relative error {worst:.2e} over 20 models"));
}

struct Mnist100 {
    ce: Vec<RunReport>,
    ratio: Vec<RunReport>,
    dominance: Vec<(usize, usize)>,
    rank_ok: Vec<bool>,
    secs: f64,
}

fn mnist100() -> &'static Mnist100 {
    static CELL: OnceLock<Mnist100> = OnceLock::new();
    CELL.get_or_init(|| {
        let _g = heavy();
        let base = preset("mnist_ratio_100.toml");
        let t = Instant::now();
        let mut out = Mnist100 { ce: vec![], ratio: vec![], dominance: vec![], rank_ok: vec![], secs: 0.0 };
        for k in 0..base.compare.seeds as u64 {
            let mut cfg = base.clone();
            cfg.seed = base.seed + k;
            let p = prepare(&cfg).unwrap();
            cfg.loss = LossConfig::of_kind(LossKind::Ce);
            let (ce, model) = run_prepared(&cfg, &p).unwrap();
            let minority = &cfg.partition.minority_classes;
            let d = gradient_dominance(&model, &p.test, minority, cfg.split.test_per_class).unwrap();
            out.dominance.push((d.holding, d.triples));
            let ra = Monitor::new(MonitorConfig::default(), p.aux.clone(), &cfg.round_config())
                .unwrap()
                .ratios_for(&model)
                .unwrap()
                .ra;
            let lowest_minority = minority.iter().map(|&c| ra[c]).fold(f64::INFINITY, f64::min);
            let highest_majority =
                (0..ra.len()).filter(|c| !minority.contains(c)).map(|c| ra[c]).fold(0.0, f64::max);
            out.rank_ok.push(lowest_minority > highest_majority);
            out.ce.push(ce);
            cfg.loss = LossConfig::of_kind(LossKind::Ratio);
            out.ratio.push(run_prepared(&cfg, &p).unwrap().0);
        }
        out.secs = t.elapsed().as_secs_f64();
        out
    })
}

fn metric(rs: &[RunReport], f: impl Fn(&RunReport) -> Option<f64>) -> f64 {
    mean(&rs.iter().map(|r| f(r).unwrap()).collect::<Vec<_>>())
}

#[test]
fn criterion_05_ratio_loss_efficacy() {
    let m = mnist100();
    let acm = |rs: &[RunReport]| metric(rs, |r| r.metrics.ac_minority);
    let auc = |rs: &[RunReport]| metric(rs, |r| r.metrics.auc);
    let (ce, ra) = (acm(&m.ce), acm(&m.ratio));
    let (ce_auc, ra_auc) = (auc(&m.ce), auc(&m.ratio));
    verdict(
        5,
        "Ratio Loss efficacy at 100:1",
        ra >= ce + 5.0 && ra_auc >= ce_auc && m.secs <= 900.0,
        format!(
            "Ac.M ratio {ra:.2} vs CE {ce:.2} (gap {:.2} >= 5), AUC ratio {ra_auc:.4} vs CE {ce_auc:.4}, {} seeds, {:.0}s",
            ra - ce,
            m.ce.len(),
            m.secs
        ),
    );
}

#[test]
fn criterion_06_majority_preservation() {
    let m = mnist100();
    let maj = |rs: &[RunReport]| metric(rs, |r| r.metrics.ac_majority);
    let (ce, ra) = (maj(&m.ce), maj(&m.ratio));
    verdict(6, "majority preservation", ra >= ce - 2.0, format!("majority accuracy ratio {ra:.2} vs CE {ce:.2} (>= CE - 2)"));
}

#[test]
fn criterion_07_gradient_dominance() {
    let m = mnist100();
    let holding: usize = m.dominance.iter().map(|d| d.0).sum();
    let triples: usize = m.dominance.iter().map(|d| d.1).sum();
    let frac = holding as f64 / triples as f64;
    let per_seed: Vec<String> = m.dominance.iter().map(|(h, t)| format!("{:.3}", *h as f64 / *t as f64)).collect();
    let ranks = m.rank_ok.iter().filter(|&&b| b).count();
    verdict(
        7,
        "majority/minority gradient dominance",
        frac >= 0.9 && ranks == m.rank_ok.len(),
        format!(
            "{holding}/{triples} = {frac:.3} of triples (>= 0.9; per seed {}), minority Ra above every majority Ra in {ranks}/{} CE models",
            per_seed.join(", "),
            m.rank_ok.len()
        ),
    );
}

#[test]
fn criterion_08_early_acknowledgment() {
    let _g = heavy();
    let mut cfg = preset("mnist_early_ack.toml");
    cfg.early_ack.rounds = vec![10, 45];
    let rows = early_ack_study(&cfg).unwrap();
    let acm = |round: usize| -> Vec<(u64, f64)> {
        rows.iter()
            .filter(|r| r.ack_round == Some(round))
            .filter_map(|r| Some((r.seed?, r.ac_minority?)))
            .collect()
    };
    let (early, late) = (acm(10), acm(45));
    let wins = early.iter().zip(&late).filter(|(a, b)| a.0 == b.0 && a.1 > b.1).count();
    verdict(
        8,
        "early acknowledgment",
        wins >= 4 && early.len() == 5,
        format!(
            "round-10 Ac.M beats round-45 in {wins}/{} seeds (mean {:.2} vs {:.2})",
            early.len(),
            mean(&early.iter().map(|x| x.1).collect::<Vec<_>>()),
            mean(&late.iter().map(|x| x.1).collect::<Vec<_>>())
        ),
    );
}

#[test]
fn criterion_09_mismatch() {
    let _g = heavy();
    let mut cfg = preset("mnist_mismatch.toml");
    cfg.mismatch.losses = vec![LossKind::Ce, LossKind::Ratio];
    let rows = mismatch_study(&cfg).unwrap();
    let cell = |loss: LossKind, c: usize| {
        rows.iter()
            .find(|r| r.seed.is_none() && r.loss == loss && r.classes_min == c)
            .and_then(|r| Some((r.ac_minority?, r.mean_client_cs)))
            .unwrap()
    };
    let (ce2, ce5) = (cell(LossKind::Ce, 2), cell(LossKind::Ce, 5));
    let (ra2, ra5) = (cell(LossKind::Ratio, 2), cell(LossKind::Ratio, 5));
    verdict(
        9,
        "mismatch direction",
        ce2.1 < ce5.1 && ce2.0 < ce5.0 && ra2.0 >= ce2.0 && ra5.0 >= ce5.0,
        format!(
            "CE Ac.M {:.2} at CS {:.3} vs {:.2} at CS {:.3}; ratio {:.2} / {:.2} vs CE {:.2} / {:.2}",
            ce2.0, ce2.1, ce5.0, ce5.1, ra2.0, ra5.0, ce2.0, ce5.0
        ),
    );
}

#[test]
fn criterion_10_hyperparameter_presets() {
    let minimal = ExperimentConfig::from_toml_str(
        "[dataset]\nkind = \"synthetic\"\nclass_count = 3\ndim = 2\nper_class = 10\nseparation = 1.0\n",
    )
    .unwrap();
    let defaults_ok = minimal.monitor.threshold == 1.25 && minimal.loss.alpha == 1.0 && minimal.loss.beta == 0.1;

    let _g = heavy();
    let mut cfg = preset("mnist_sweep.toml");
    cfg.rounds.rounds_total = 2;
    let dir = tempfile::tempdir().unwrap();
    let mut grids_ok = true;
    let mut sizes = Vec::new();
    for axis in [SweepAxis::TRa, SweepAxis::Alpha, SweepAxis::Beta] {
        let mut one = cfg.clone();
        one.sweep.axes = vec![axis];
        let rows = sweep(&one).unwrap();
        let path = dir.path().join(format!("sweep_{}.csv", axis.name()));
        write_comparison_csv(&rows, &path).unwrap();
        let values: Vec<f64> = rows.iter().filter(|r| r.seed.is_none()).filter_map(|r| r.value).collect();
        let text = std::fs::read_to_string(&path).unwrap();
        grids_ok &= values == axis.default_grid() && text.lines().count() == rows.len() + 1;
        sizes.push(format!("{} x{}", axis.name(), values.len()));
    }
    verdict(
        10,
        "hyperparameter presets",
        defaults_ok && grids_ok,
        format!("defaults T_Ra=1.25 alpha=1.0 beta=0.1: {defaults_ok}; sweep CSVs {}", sizes.join(", ")),
    );
}

#[test]
fn criterion_11_determinism() {
    let _g = heavy();
    let cfg = preset("monitor_synthetic.toml");
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let p = prepare(&cfg).unwrap();
        let (r, model) = run_prepared(&cfg, &p).unwrap();
        let out = dir.path().join(k.to_string());
        r.write(&out).unwrap();
        bytes.push((
            r.canonical_json().unwrap(),
            std::fs::read(out.join("rounds.csv")).unwrap(),
            ratiofl::nn::snapshot::to_bytes(&model),
        ));
    }
    verdict(
        11,
        "determinism",
        bytes[0] == bytes[1],
        format!("two runs: report {} bytes, rounds.csv and model snapshot identical: {}", bytes[0].0.len(), bytes[0] == bytes[1]),
    );
}
