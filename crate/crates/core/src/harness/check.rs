use super::run::RunReport;
use super::studies::CellRow;

/// Relative tolerance on the realized global ratio, enforced only when minority classes
/// are planted.
pub const GAMMA_TOLERANCE: f64 = 0.10;

/// Invariant violations of one run report; empty when the report is sound.
pub fn check_report(r: &RunReport) -> Vec<String> {
    let mut v = Vec::new();
    let total = r.config.rounds.rounds_total;
    if r.rounds.len() != total || r.rounds.iter().enumerate().any(|(i, x)| x.round != i + 1) {
        v.push(format!("expected exactly one record for each round 1..={total}"));
    }
    if !r.isolation_holds {
        v.push("test or auxiliary samples leak into client shards".into());
    }
    let pct = |name: &str, x: Option<f64>, v: &mut Vec<String>| {
        if let Some(x) = x.filter(|x| !(0.0..=100.0).contains(x)) {
            v.push(format!("{name} = {x} is outside [0, 100]"));
        }
    };
    pct("minority accuracy", r.metrics.ac_minority, &mut v);
    pct("majority accuracy", r.metrics.ac_majority, &mut v);
    pct("accuracy", r.metrics.accuracy, &mut v);
    if let Some(a) = r.metrics.auc.filter(|a| !(0.0..=1.0).contains(a)) {
        v.push(format!("AUC = {a} is outside [0, 1]"));
    }
    let target = r.target_gamma;
    if !r.minority_classes.is_empty() && (r.realized_gamma - target).abs() > GAMMA_TOLERANCE * target {
        v.push(format!("realized global ratio {:.3} is not within 10% of {target}", r.realized_gamma));
    }
    for x in &r.rounds {
        if x.estimate.iter().any(|e| !e.is_finite() || *e < 0.0) {
            v.push(format!("round {}: composition estimate has a negative or non-finite entry", x.round));
        }
        if x.ratios.iter().any(|e| !e.is_finite() || *e < 0.0) {
            v.push(format!("round {}: ratio vector has a negative or non-finite entry", x.round));
        }
        if !x.mean_client_loss.is_finite() {
            v.push(format!("round {}: client loss is not finite", x.round));
        }
    }
    v
}

/// Violations over every row of a comparison table.
pub fn check_rows(rows: &[CellRow]) -> Vec<String> {
    let mut v = Vec::new();
    for r in rows {
        let tag = format!(
            "{}/{}/gamma {}/seed {}",
            r.study,
            r.loss,
            r.gamma,
            r.seed.map(|s| s.to_string()).unwrap_or_else(|| "mean".into())
        );
        for (name, x) in [("minority accuracy", r.ac_minority), ("majority accuracy", r.ac_majority), ("accuracy", r.accuracy)] {
            if let Some(x) = x.filter(|x| !(0.0..=100.0).contains(x)) {
                v.push(format!("{tag}: {name} = {x} is outside [0, 100]"));
            }
        }
        if let Some(a) = r.auc.filter(|a| !(0.0..=1.0).contains(a)) {
            v.push(format!("{tag}: AUC = {a} is outside [0, 1]"));
        }
        if r.gamma > 1.0 && (r.realized_gamma - r.gamma).abs() > GAMMA_TOLERANCE * r.gamma {
            v.push(format!("{tag}: realized global ratio {:.3} is not within 10%", r.realized_gamma));
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::tests::tiny;
    use crate::harness::run_experiment;

    #[test]
    fn sound_report_passes_and_tampering_is_caught() {
        let r = run_experiment(&tiny()).unwrap();
        assert!(check_report(&r).is_empty());

        let mut bad = r.clone();
        bad.rounds.pop();
        assert_eq!(check_report(&bad).len(), 1);

        let mut bad = r.clone();
        bad.metrics.auc = Some(1.5);
        bad.metrics.accuracy = Some(-1.0);
        bad.isolation_holds = false;
        assert_eq!(check_report(&bad).len(), 3);

        let mut bad = r.clone();
        bad.rounds[0].estimate[0] = f64::NAN;
        assert_eq!(check_report(&bad).len(), 1);

        let mut bad = r;
        bad.minority_classes = vec![0];
        bad.target_gamma = 10.0;
        bad.realized_gamma = 12.0;
        assert_eq!(check_report(&bad).len(), 1);
    }
}
