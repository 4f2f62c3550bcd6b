use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pacc::analysis::{bias_score, swap_study};
use pacc::metrics::{evaluate, MetricsReport, TaskMetrics};
use pacc::models::{Model, ModelKind, Task};
use pacc::simlog::{generate_logs, split_dataset, GenConfig, LogRecord};
use pacc::training::train;

use crate::commands::{create_dir, write_file};
use crate::config::RunConfig;
use crate::Result;

/// One trained model on one seed's data.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub seed: u64,
    pub model: ModelKind,
    pub best_epoch: usize,
    pub metrics: MetricsReport,
    /// Swap bias score over both tasks' points.
    pub bias_score: f64,
    /// Share of test impressions with `p_cvr > p_ctr`.
    pub violation_rate: f64,
}

pub fn violation_rate(model: &Model, records: &[LogRecord]) -> pacc::Result<f64> {
    let mut n = 0usize;
    for r in records {
        let p = model.predict(&r.features, r.position)?;
        n += (p.p_cvr > p.p_ctr) as usize;
    }
    Ok(n as f64 / records.len().max(1) as f64)
}

/// Simulate, split and train every configured model for each seed of the
/// grid `cfg.seed, cfg.seed + 1, ...`. `progress` receives one line per run.
pub fn bench_runs(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<Vec<BenchRun>> {
    let mut runs = Vec::new();
    for i in 0..cfg.bench.repeats as u64 {
        let seed = cfg.seed + i;
        let sim = GenConfig {
            seed,
            ..cfg.sim.clone()
        };
        let (records, _) = generate_logs(&sim)?;
        let split = split_dataset(&records, cfg.split, seed)?;
        for &kind in &cfg.bench.models {
            let train_cfg = pacc::training::TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let (model, report) = train(
                &cfg.model_config(kind),
                &split.train,
                &split.validation,
                &train_cfg,
            )?;
            let metrics = evaluate(&model, &split.test)?;
            let sample = cfg.bench.swap_sample.min(split.test.len());
            let points = swap_study(&model, &split.test, sample, seed)?;
            let run = BenchRun {
                seed,
                model: kind,
                best_epoch: report.best_epoch,
                bias_score: bias_score(&points)?,
                violation_rate: violation_rate(&model, &split.test)?,
                metrics,
            };
            progress(&format!(
                "seed {seed} {kind}: best epoch {}, cvr weighted mrr {:.4}, bias {:.4}",
                run.best_epoch, run.metrics.cvr.weighted_mrr, run.bias_score
            ));
            runs.push(run);
        }
    }
    Ok(runs)
}

/// Column names of the comparison table, CTR block then CVR block.
fn table_columns() -> Vec<String> {
    Task::BOTH
        .iter()
        .flat_map(|t| TaskMetrics::METRICS.iter().map(move |m| format!("{t}_{m}")))
        .collect()
}

/// Seed-mean metrics, one row per model and 8 metric columns.
pub fn comparison_table(cfg: &RunConfig, runs: &[BenchRun]) -> String {
    let mut out = format!("model,{}\n", table_columns().join(","));
    for &kind in &cfg.bench.models {
        let mine: Vec<&BenchRun> = runs.iter().filter(|r| r.model == kind).collect();
        let mut cells = Vec::new();
        for task in Task::BOTH {
            for j in 0..TaskMetrics::METRICS.len() {
                let sum: f64 = mine.iter().map(|r| r.metrics.task(task).values()[j]).sum();
                cells.push((sum / mine.len() as f64).to_string());
            }
        }
        let _ = writeln!(out, "{kind},{}", cells.join(","));
    }
    out
}

/// Run the benchmark and write `bench.csv` (comparison table),
/// `bench_long.csv` (every seed, model, task, metric) and `bench_swap.csv`.
pub fn cmd_bench(
    cfg: &RunConfig,
    out: &Path,
    progress: impl FnMut(&str),
) -> Result<(Vec<BenchRun>, Vec<PathBuf>)> {
    create_dir(out)?;
    let runs = bench_runs(cfg, progress)?;

    let mut long = String::from("seed,model,task,metric,value\n");
    let mut swap = String::from("seed,model,best_epoch,bias_score,violation_rate\n");
    for r in &runs {
        for row in r.metrics.csv_rows() {
            let _ = writeln!(long, "{},{row}", r.seed);
        }
        let _ = writeln!(
            swap,
            "{},{},{},{},{}",
            r.seed, r.model, r.best_epoch, r.bias_score, r.violation_rate
        );
    }

    let mut written = Vec::new();
    for (name, body) in [
        ("bench.csv", comparison_table(cfg, &runs)),
        ("bench_long.csv", long),
        ("bench_swap.csv", swap),
    ] {
        let path = out.join(name);
        write_file(&path, &body)?;
        written.push(path);
    }
    Ok((runs, written))
}
