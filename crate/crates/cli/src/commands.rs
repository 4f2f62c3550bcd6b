use std::path::{Path, PathBuf};

use pacc::analysis::{
    bias_score, emit_figures, sample_records, swap_impact_curve, swap_impact_points, swap_study,
};
use pacc::metrics::{evaluate, MetricsReport};
use pacc::models::ModelKind;
use pacc::simlog::{
    generate_logs, read_logs, split_dataset, write_logs, write_propensity, LogRecord,
};
use pacc::training::{load_checkpoint, save_checkpoint, train, TrainReport};

use crate::config::RunConfig;
use crate::{CliError, Result};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "PACC_OUT_DIR";

/// `--out` wins over the environment, which wins over the config file.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.out_dir.clone(),
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Runtime(pacc::Error::Io {
            context: format!("creating {}", dir.display()),
            source: e,
        })
    })
}

pub(crate) fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| {
        CliError::Runtime(pacc::Error::Io {
            context: format!("writing {}", path.display()),
            source: e,
        })
    })
}

/// Generate logs, split them by query and write `logs.csv`, `train.csv`,
/// `valid.csv`, `test.csv` and `propensity.csv` into `out`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let (records, theta) = generate_logs(&cfg.sim)?;
    let split = split_dataset(&records, cfg.split, cfg.seed)?;
    let mut written = Vec::new();
    for (name, part) in [
        ("logs.csv", &records),
        ("train.csv", &split.train),
        ("valid.csv", &split.validation),
        ("test.csv", &split.test),
    ] {
        let path = out.join(name);
        write_logs(part, &path)?;
        written.push(path);
    }
    let path = out.join("propensity.csv");
    write_propensity(&theta, &path)?;
    written.push(path);
    Ok(written)
}

/// A log file, or a directory holding `default_name`.
fn log_path(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}

fn read(path: &Path) -> Result<Vec<LogRecord>> {
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "{} does not exist",
            path.display()
        )));
    }
    Ok(read_logs(path)?)
}

/// Train `kind` on `data/train.csv` with early stopping on
/// `data/valid.csv`; writes `<kind>.ckpt` and `<kind>_train.csv`.
pub fn cmd_train(cfg: &RunConfig, data: &Path, kind: ModelKind, out: &Path) -> Result<TrainReport> {
    let train_set = read(&data.join("train.csv"))?;
    let valid_set = read(&data.join("valid.csv"))?;
    create_dir(out)?;
    let (model, mut report) = train(&cfg.model_config(kind), &train_set, &valid_set, &cfg.train)?;
    let ckpt = out.join(format!("{kind}.ckpt"));
    save_checkpoint(&model, &ckpt)?;
    report.write_csv(out.join(format!("{kind}_train.csv")))?;
    report.checkpoint = Some(ckpt);
    Ok(report)
}

/// Evaluate a checkpoint on a log file (or `test.csv` in a directory) and
/// write `metrics.csv`.
pub fn cmd_eval(checkpoint: &Path, data: &Path, out: &Path) -> Result<MetricsReport> {
    let model = load_checkpoint(checkpoint, None)?;
    let records = read(&log_path(data, "test.csv"))?;
    let report = evaluate(&model, &records)?;
    create_dir(out)?;
    write_file(&out.join("metrics.csv"), &report.to_csv())?;
    Ok(report)
}

/// Swap study on a sample of records, impact curve over all of them, raw
/// impact points on a second sample; writes CSVs and figures and returns the
/// bias score.
pub fn cmd_swap(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<f64> {
    let model = load_checkpoint(checkpoint, None)?;
    let records = read(&log_path(data, "test.csv"))?;
    let points = swap_study(
        &model,
        &records,
        cfg.bench.swap_sample.min(records.len()),
        cfg.seed,
    )?;
    let picked = sample_records(
        records.len(),
        cfg.bench.impact_sample.min(records.len()),
        cfg.seed.wrapping_add(1),
    )?;
    let subset: Vec<LogRecord> = picked.into_iter().map(|i| records[i].clone()).collect();
    let raw = swap_impact_points(&model, &subset)?;
    let curve = swap_impact_curve(&model, &records)?;
    emit_figures(&points, &curve, &raw, out)?;
    Ok(bias_score(&points)?)
}
