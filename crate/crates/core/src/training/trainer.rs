use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::loss::{loss_grads, LossAccumulator, LossParts, RestrictionMode};
use crate::error::{Error, Result};
use crate::metrics::{auc, ScoredExample};
use crate::models::{Model, ModelConfig, ModelKind, Prediction};
use crate::nn::{OptimizerKind, OptimizerState, Params, RngState};
use crate::simlog::LogRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Zero returns the initialized model untouched.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub restriction: RestrictionMode,
    pub restriction_weight: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 256,
            learning_rate: 1e-3,
            dropout: 0.2,
            restriction: RestrictionMode::Corrected,
            restriction_weight: 1.0,
            patience: 3,
            seed: 0,
            optimizer: OptimizerKind::adam(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout must be in [0,1), got {}", self.dropout));
        }
        if !(self.restriction_weight >= 0.0 && self.restriction_weight.is_finite()) {
            problems.push(format!(
                "restriction_weight must be nonnegative, got {}",
                self.restriction_weight
            ));
        }
        if self.patience == 0 {
            problems.push("patience must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch, dropout active.
    pub train: LossParts,
    pub validation: LossParts,
    /// `None` when the validation set has a single class for the task.
    pub val_auc_ctr: Option<f64>,
    pub val_auc_cvr: Option<f64>,
}

impl EpochStats {
    /// Model-selection score: CTR AUC + CVR AUC, an undefined AUC counting as
    /// chance.
    pub fn score(&self) -> f64 {
        self.val_auc_ctr.unwrap_or(0.5) + self.val_auc_cvr.unwrap_or(0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept; 0 if no epoch ran.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str =
        "epoch,loss_total,loss_ctr,loss_cvr,loss_res,val_auc_ctr,val_auc_cvr";

    /// Training losses per epoch; an undefined AUC is left empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.epoch,
                e.train.total,
                e.train.ctr,
                e.train.cvr,
                e.train.res,
                opt(e.val_auc_ctr),
                opt(e.val_auc_cvr)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Build a model from `model_config` (dropout taken from `cfg`), initialized
/// from the seed's `init` substream, and [`fit`] it.
pub fn train(
    model_config: &ModelConfig,
    train: &[LogRecord],
    validation: &[LogRecord],
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    let config = ModelConfig {
        dropout: cfg.dropout,
        ..model_config.clone()
    };
    let mut init = RngState::new(cfg.seed).substream("init");
    let mut model = Model::new(config, &mut init)?;
    let report = fit(&mut model, train, validation, cfg)?;
    Ok((model, report))
}

/// Mini-batch training of an existing model. On return `model` holds the
/// parameters of the best validation epoch.
pub fn fit(
    model: &mut Model,
    train: &[LogRecord],
    validation: &[LogRecord],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Config(
            "training and validation sets must be nonempty".into(),
        ));
    }
    let root = RngState::new(cfg.seed);
    let mut optimizer = OptimizerState::new(cfg.optimizer, cfg.learning_rate)?;
    let check_pacc =
        model.kind() == ModelKind::Pacc && cfg.restriction == RestrictionMode::Corrected;
    let use_dropout = model.config().dropout > 0.0;

    let mut report = TrainReport::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut root.indexed("shuffle", epoch as u64));
        let mut dropout_rng = root.indexed("dropout", epoch as u64);
        let mut epoch_loss = LossAccumulator::default();

        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = b + 1;
            model.zero_grads();
            let mut batch_loss = LossAccumulator::default();
            for &i in chunk {
                let r = &train[i];
                let rng = use_dropout.then_some(&mut dropout_rng);
                let trace = model.forward_trace(&r.features, r.position, rng)?;
                let pred = trace.prediction();
                if !(pred.p_ctr.is_finite() && pred.p_cvr.is_finite()) {
                    return Err(Error::Training {
                        epoch,
                        batch,
                        message: "non-finite prediction".into(),
                    });
                }
                batch_loss.add(pred, r.click, r.conversion, cfg.restriction)?;
                epoch_loss.add(pred, r.click, r.conversion, cfg.restriction)?;
                let (g_ctr, g_cvr) = loss_grads(
                    pred,
                    r.click,
                    r.conversion,
                    cfg.restriction,
                    cfg.restriction_weight,
                    chunk.len(),
                )?;
                model.backward(&trace, g_ctr, g_cvr)?;
            }
            let parts = batch_loss.finish(cfg.restriction_weight);
            if !parts.total.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch,
                    message: format!("non-finite loss {}", parts.total),
                });
            }
            if check_pacc && batch_loss.res_sum() != 0.0 {
                return Err(Error::Training {
                    epoch,
                    batch,
                    message: format!(
                        "PACC produced p_cvr > p_ctr (restriction sum {})",
                        batch_loss.res_sum()
                    ),
                });
            }
            optimizer.step(model)?;
        }

        let stats = validate_epoch(
            model,
            validation,
            cfg,
            epoch,
            epoch_loss.finish(cfg.restriction_weight),
        )?;
        let score = stats.score();
        report.epochs.push(stats);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model.flat_values()));
            report.best_epoch = epoch;
        } else if epoch - report.best_epoch >= cfg.patience {
            report.stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    if let Some((_, values)) = best {
        model.set_flat_values(&values)?;
    }
    Ok(report)
}

fn validate_epoch(
    model: &Model,
    validation: &[LogRecord],
    cfg: &TrainConfig,
    epoch: usize,
    train: LossParts,
) -> Result<EpochStats> {
    let mut loss = LossAccumulator::default();
    let mut ctr = Vec::with_capacity(validation.len());
    let mut cvr = Vec::with_capacity(validation.len());
    for r in validation {
        let pred: Prediction = model.predict(&r.features, r.position)?;
        loss.add(&pred, r.click, r.conversion, cfg.restriction)?;
        let ex = |score, label| ScoredExample {
            query_id: r.query_id,
            item_id: r.item_id,
            position: r.position,
            score,
            label,
            weight: 1.0,
        };
        ctr.push(ex(pred.p_ctr, r.click));
        cvr.push(ex(pred.p_cvr, r.conversion));
    }
    let defined = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(EpochStats {
        epoch,
        train,
        validation: loss.finish(cfg.restriction_weight),
        val_auc_ctr: defined(auc(&ctr))?,
        val_auc_cvr: defined(auc(&cvr))?,
    })
}
