use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ratiofl::harness::{
    check_report, check_rows, compare_losses, diag_hl, early_ack_study, mismatch_study, monitor_eval, prepare,
    run_prepared, sweep, write_comparison_csv, write_hl_csv, CellRow, ExperimentConfig, RunReport,
};
use ratiofl::nn::snapshot;

#[derive(Parser)]
#[command(name = "ratiofl", version, about = "Federated-learning imbalance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One seeded run: report.json, rounds.csv and model snapshots.
    Run(Common),
    /// Loss kinds across global ratios: comparison.csv.
    Compare(Common),
    /// Loss kinds across classes-per-client ranges: comparison.csv.
    Mismatch(Common),
    /// One run scored on composition-estimate accuracy.
    MonitorEval(Common),
    /// Hidden-layer output similarity per class after training: hl.csv.
    DiagHl(Common),
    /// Hyperparameter grids for T_Ra, alpha and beta: one sweep_<axis>.csv per axis.
    Sweep(Common),
    /// Balanced-data replacement at several rounds: comparison.csv.
    EarlyAck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Exit nonzero if any report invariant is violated.
    #[arg(long)]
    check: bool,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::from_file(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let out = self.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok((cfg, out))
    }
}

fn write_report(report: &RunReport, out: &Path) -> Result<Vec<String>> {
    report.write(out)?;
    println!(
        "{}: acc {} ac.m {} ac.maj {} auc {} (gamma {:.2}, {:.1}s)",
        out.display(),
        fmt(report.metrics.accuracy),
        fmt(report.metrics.ac_minority),
        fmt(report.metrics.ac_majority),
        fmt(report.metrics.auc),
        report.realized_gamma,
        report.wall_time_secs
    );
    Ok(check_report(report))
}

fn write_rows(rows: &[CellRow], path: &Path) -> Result<Vec<String>> {
    write_comparison_csv(rows, path)?;
    for r in rows.iter().filter(|r| r.seed.is_none()) {
        println!(
            "{:<6} gamma {:<6} c [{},{}]{}{} ac.m {} ac.maj {} auc {} client cs {:.3}",
            r.loss.to_string(),
            r.gamma,
            r.classes_min,
            r.classes_max,
            r.ack_round.map(|a| format!(" ack {a}")).unwrap_or_default(),
            r.axis.as_ref().zip(r.value).map(|(a, v)| format!(" {a}={v}")).unwrap_or_default(),
            fmt(r.ac_minority),
            fmt(r.ac_majority),
            fmt(r.auc),
            r.mean_client_cs
        );
    }
    println!("wrote {}", path.display());
    Ok(check_rows(rows))
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

fn execute(cmd: &Command) -> Result<(Vec<String>, bool)> {
    let (common, violations) = match cmd {
        Command::Run(c) => {
            let (cfg, out) = c.load()?;
            let p = prepare(&cfg)?;
            let (report, model) = run_prepared(&cfg, &p)?;
            std::fs::write(out.join("model.bin"), snapshot::to_bytes(&model))?;
            std::fs::write(out.join("model.json"), snapshot::to_json(&model)?)?;
            (c, write_report(&report, &out)?)
        }
        Command::MonitorEval(c) => {
            let (cfg, out) = c.load()?;
            let (report, summary) = monitor_eval(&cfg)?;
            std::fs::write(out.join("monitor.json"), serde_json::to_string_pretty(&summary)?)?;
            println!(
                "mean cs {:.4}, min cs after round 2 {}",
                summary.mean_cs,
                fmt(summary.min_cs_after_round_2)
            );
            (c, write_report(&report, &out)?)
        }
        Command::DiagHl(c) => {
            let (cfg, out) = c.load()?;
            let (report, stats) = diag_hl(&cfg)?;
            write_hl_csv(&stats, &out.join("hl.csv"))?;
            for s in &stats {
                println!("class {}: mean cs {:.4} cov {:.4}", s.class, s.mean_cs, s.cov);
            }
            (c, write_report(&report, &out)?)
        }
        Command::Compare(c) | Command::Mismatch(c) | Command::EarlyAck(c) => {
            let (cfg, out) = c.load()?;
            let rows = match cmd {
                Command::Compare(_) => compare_losses(&cfg)?,
                Command::Mismatch(_) => mismatch_study(&cfg)?,
                _ => early_ack_study(&cfg)?,
            };
            (c, write_rows(&rows, &out.join("comparison.csv"))?)
        }
        Command::Sweep(c) => {
            let (cfg, out) = c.load()?;
            let mut violations = Vec::new();
            for &axis in &cfg.sweep.axes {
                let mut one = cfg.clone();
                one.sweep.axes = vec![axis];
                let rows = sweep(&one)?;
                violations.extend(write_rows(&rows, &out.join(format!("sweep_{}.csv", axis.name())))?);
            }
            (c, violations)
        }
    };
    Ok((violations, common.check))
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let (violations, check) = execute(&cli.command)?;
    for v in &violations {
        eprintln!("invariant violated: {v}");
    }
    if check && !violations.is_empty() {
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}
