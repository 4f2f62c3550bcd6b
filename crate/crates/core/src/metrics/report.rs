use std::collections::BTreeSet;
use std::fmt;

use super::ranking::{auc, mrr, pauc, weighted_mrr, RankSource, ScoredExample};
use super::weights::model_weights;
use crate::error::Result;
use crate::models::{Model, ModelKind, Task};
use crate::simlog::LogRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskMetrics {
    pub task: Task,
    pub auc: f64,
    pub pauc: f64,
    pub mrr: f64,
    pub weighted_mrr: f64,
    /// Queries with at least one positive.
    pub queries: usize,
    pub positives: usize,
    /// Records whose weight denominator was clamped.
    pub clamped: usize,
}

impl TaskMetrics {
    pub const METRICS: [&'static str; 4] = ["auc", "pauc", "mrr", "weighted_mrr"];

    pub fn values(&self) -> [f64; 4] {
        [self.auc, self.pauc, self.mrr, self.weighted_mrr]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub model: ModelKind,
    pub ctr: TaskMetrics,
    pub cvr: TaskMetrics,
}

impl MetricsReport {
    pub fn task(&self, task: Task) -> &TaskMetrics {
        match task {
            Task::Ctr => &self.ctr,
            Task::Cvr => &self.cvr,
        }
    }

    pub const CSV_HEADER: &'static str = "model,task,metric,value";

    /// Rows without header, one per (task, metric).
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows = Vec::new();
        for task in Task::BOTH {
            let m = self.task(task);
            for (name, v) in TaskMetrics::METRICS.iter().zip(m.values()) {
                rows.push(format!("{},{},{},{}", self.model, task, name, v));
            }
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in self.csv_rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model: {}", self.model)?;
        writeln!(
            f,
            "{:<5} {:>8} {:>8} {:>8} {:>13} {:>8} {:>9}",
            "task", "auc", "pauc", "mrr", "weighted_mrr", "queries", "positives"
        )?;
        for task in Task::BOTH {
            let m = self.task(task);
            writeln!(
                f,
                "{:<5} {:>8.4} {:>8.4} {:>8.4} {:>13.4} {:>8} {:>9}",
                task.as_str(),
                m.auc,
                m.pauc,
                m.mrr,
                m.weighted_mrr,
                m.queries,
                m.positives
            )?;
        }
        Ok(())
    }
}

/// Which position a record is scored at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorePosition {
    Logged,
    /// Every record at the same position: the position-free ranking a model
    /// would serve.
    Fixed(usize),
}

/// Position at which [`evaluate`] scores records; the logged position enters
/// the metrics only through the weights and the PAUC buckets.
pub const REFERENCE_POSITION: usize = 1;

/// Score every record for `task`, attaching the given weights.
pub fn scored_examples(
    model: &Model,
    records: &[LogRecord],
    task: Task,
    weights: &[f64],
    at: ScorePosition,
) -> Result<Vec<ScoredExample>> {
    crate::error::shape_check("weights", records.len(), weights.len())?;
    records
        .iter()
        .zip(weights)
        .map(|(r, &w)| {
            let position = match at {
                ScorePosition::Logged => r.position,
                ScorePosition::Fixed(p) => p,
            };
            let p = model.predict(&r.features, position)?;
            Ok(ScoredExample {
                query_id: r.query_id,
                item_id: r.item_id,
                position: r.position,
                score: p.task(task),
                label: match task {
                    Task::Ctr => r.click,
                    Task::Cvr => r.conversion,
                },
                weight: w,
            })
        })
        .collect()
}

/// All four metrics for both tasks, ranking by predictions at
/// [`REFERENCE_POSITION`]. CVR uses conversion labels over every impression.
pub fn evaluate(model: &Model, records: &[LogRecord]) -> Result<MetricsReport> {
    let one = |task: Task| -> Result<TaskMetrics> {
        let weights = model_weights(records, model, REFERENCE_POSITION, task)?;
        let examples = scored_examples(
            model,
            records,
            task,
            &weights.values,
            ScorePosition::Fixed(REFERENCE_POSITION),
        )?;
        let positives = examples.iter().filter(|e| e.label).count();
        let queries: BTreeSet<u64> = examples
            .iter()
            .filter(|e| e.label)
            .map(|e| e.query_id)
            .collect();
        Ok(TaskMetrics {
            task,
            auc: auc(&examples)?,
            pauc: pauc(&examples)?,
            mrr: mrr(&examples)?,
            weighted_mrr: weighted_mrr(&examples, RankSource::Model)?,
            queries: queries.len(),
            positives,
            clamped: weights.clamped.len(),
        })
    };
    Ok(MetricsReport {
        model: model.kind(),
        ctr: one(Task::Ctr)?,
        cvr: one(Task::Cvr)?,
    })
}
