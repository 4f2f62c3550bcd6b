use crate::error::{Error, Result};
use crate::models::{Model, Task};
use crate::simlog::LogRecord;

/// Denominators below this are clamped when forming counterfactual weights.
pub const MIN_DENOMINATOR: f64 = 1e-9;

/// Per-record inverse-propensity weights. `clamped` lists the indices whose
/// denominator fell below [`MIN_DENOMINATOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    pub clamped: Vec<usize>,
}

/// `P(s|1) / P(s|p_i)` from a PACC model's learned position head.
pub fn pacc_weights(records: &[LogRecord], model: &Model) -> Result<Weights> {
    let table = model
        .propensities()
        .ok_or_else(|| Error::State(format!("{} has no propensity head", model.kind())))?;
    let mut values = Vec::with_capacity(records.len());
    for r in records {
        let seen = *table.get(r.position.wrapping_sub(1)).ok_or_else(|| {
            Error::Domain(format!(
                "position {} outside 1..={}",
                r.position,
                table.len()
            ))
        })?;
        values.push(table[0] / seen);
    }
    Ok(Weights {
        values,
        clamped: Vec::new(),
    })
}

/// `P(y=1|f_i, r) / P(y=1|f_i, p_i)` from two forwards of any model. The
/// constant `1/P(s|r)` is dropped, so weights are relative.
pub fn counterfactual_weights(
    records: &[LogRecord],
    model: &Model,
    reference: usize,
    task: Task,
) -> Result<Weights> {
    let mut values = Vec::with_capacity(records.len());
    let mut clamped = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let preds = model.predict_positions(&r.features, &[reference, r.position])?;
        let mut den = preds[1].task(task);
        if den < MIN_DENOMINATOR {
            den = MIN_DENOMINATOR;
            clamped.push(i);
        }
        values.push(preds[0].task(task) / den);
    }
    Ok(Weights { values, clamped })
}

/// The weighting each model kind uses for its weighted MRR: the learned
/// propensity table for PACC (reference position 1), counterfactual forwards
/// against `reference` otherwise.
pub fn model_weights(
    records: &[LogRecord],
    model: &Model,
    reference: usize,
    task: Task,
) -> Result<Weights> {
    match model {
        Model::Pacc(_) => pacc_weights(records, model),
        _ => counterfactual_weights(records, model, reference, task),
    }
}
