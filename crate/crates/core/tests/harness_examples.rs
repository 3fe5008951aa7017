use ratiofl::harness::{diag_hl, prepare, run_experiment, run_prepared, ExperimentConfig};
use ratiofl::monitor::{Monitor, MonitorConfig};

fn balanced() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(
        r#"
seed = 2
[dataset]
kind = "synthetic"
class_count = 5
dim = 10
per_class = 1200
separation = 5.0
[split]
test_per_class = 100
aux_per_class = 32
[partition]
num_clients = 20
classes_per_client = [5, 5]
samples_per_class = 40
[rounds]
clients_total = 20
clients_selected = 10
rounds_total = 10
learning_rate = 0.05
[model]
hidden = [32, 16]
[loss]
kind = "ce"
"#,
    )
    .unwrap()
}

#[test]
fn balanced_synthetic_trains_above_ninety_percent() {
    let r = run_experiment(&balanced()).unwrap();
    let acc = r.metrics.accuracy.unwrap();
    assert!(acc > 90.0, "accuracy {acc}");
    assert!(r.isolation_holds);
    assert!((r.realized_gamma - 1.0).abs() < 1e-12);
}

#[test]
fn trained_hidden_outputs_are_similar_within_class() {
    let mut cfg = balanced();
    cfg.rounds.rounds_total = 30;
    let (_, stats) = diag_hl(&cfg).unwrap();
    let mean = stats.iter().map(|s| s.mean_cs).sum::<f64>() / stats.len() as f64;
    assert!(mean > 0.9, "mean per-class CS {mean}");
}

/// On a model trained with balanced data no class stands out: every Ra_p lies within a
/// factor of three of the median, while the imbalanced runs of the acceptance suite
/// separate minority classes by an order of magnitude.
#[test]
fn balanced_training_gives_comparable_ratios() {
    let cfg = balanced();
    let p = prepare(&cfg).unwrap();
    let (_, model) = run_prepared(&cfg, &p).unwrap();
    let ra = Monitor::new(MonitorConfig::default(), p.aux.clone(), &cfg.round_config())
        .unwrap()
        .ratios_for(&model)
        .unwrap()
        .ra;
    let mut sorted = ra.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    assert!(ra.iter().all(|&r| r > median / 3.0 && r < median * 3.0), "{ra:?}");
}
