//! Counterfactual position-swap studies: original vs. swapped-to-first
//! predictions in log-odds space, per-position swap-impact ratios, and a
//! scalar position-bias score.

mod figures;

use std::collections::BTreeMap;

use rand::seq::index;

pub use figures::emit_figures;

use crate::error::{Error, Result};
use crate::models::{counterfactual_forward, Model, Task};
use crate::nn::{log_odds, RngState};
use crate::simlog::LogRecord;

/// The position every item is swapped to.
pub const SWAP_POSITION: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapPoint {
    pub query_id: u64,
    pub item_id: u64,
    /// Logged position.
    pub position: usize,
    pub task: Task,
    pub p_orig: f64,
    pub p_swap: f64,
    pub lo_orig: f64,
    pub lo_swap: f64,
}

/// Mean swap ratios `P(y|f,1) / P(y|f,p)` at one logged position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapImpact {
    pub position: usize,
    pub ratio_ctr: f64,
    pub ratio_cvr: f64,
    /// `P(s|1) / P(s|p)`, PACC only.
    pub ratio_seen: Option<f64>,
    pub n: usize,
}

/// Swap ratios of a single item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactPoint {
    pub item_id: u64,
    pub position: usize,
    pub ratio_ctr: f64,
    pub ratio_cvr: f64,
}

/// Indices of `n` records drawn uniformly without replacement, ascending.
pub fn sample_records(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > len {
        return Err(Error::Config(format!(
            "cannot sample {n} records from {len}"
        )));
    }
    let mut rng = RngState::new(seed).substream("sampling");
    let mut picked = index::sample(&mut rng, len, n).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Forward `sample_n` uniformly sampled records at their logged position
/// and at position 1; one point per record and task, CTR first.
pub fn swap_study(
    model: &Model,
    records: &[LogRecord],
    sample_n: usize,
    seed: u64,
) -> Result<Vec<SwapPoint>> {
    let picked = sample_records(records.len(), sample_n, seed)?;
    let mut points = Vec::with_capacity(2 * picked.len());
    for i in picked {
        let r = &records[i];
        let (orig, swap) = counterfactual_forward(model, &r.features, r.position, SWAP_POSITION)?;
        for task in Task::BOTH {
            let (po, ps) = (orig.task(task), swap.task(task));
            points.push(SwapPoint {
                query_id: r.query_id,
                item_id: r.item_id,
                position: r.position,
                task,
                p_orig: po,
                p_swap: ps,
                lo_orig: log_odds(po),
                lo_swap: log_odds(ps),
            });
        }
    }
    Ok(points)
}

/// Mean `|lo_orig − lo_swap|`; zero for a position-invariant model.
pub fn bias_score(points: &[SwapPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::UndefinedMetric("bias score of no points".into()));
    }
    let total: f64 = points.iter().map(|p| (p.lo_orig - p.lo_swap).abs()).sum();
    Ok(total / points.len() as f64)
}

/// Per-item swap ratios for every record.
pub fn swap_impact_points(model: &Model, records: &[LogRecord]) -> Result<Vec<ImpactPoint>> {
    records
        .iter()
        .map(|r| {
            let (orig, swap) =
                counterfactual_forward(model, &r.features, r.position, SWAP_POSITION)?;
            Ok(ImpactPoint {
                item_id: r.item_id,
                position: r.position,
                ratio_ctr: swap.p_ctr / orig.p_ctr,
                ratio_cvr: swap.p_cvr / orig.p_cvr,
            })
        })
        .collect()
}

/// Per-position means of the swap ratios. Positions without records are
/// omitted.
pub fn swap_impact_curve(model: &Model, records: &[LogRecord]) -> Result<Vec<SwapImpact>> {
    let points = swap_impact_points(model, records)?;
    Ok(summarize_impact(model, &points))
}

/// Per-position means of already computed impact points.
pub fn summarize_impact(model: &Model, points: &[ImpactPoint]) -> Vec<SwapImpact> {
    let mut sums: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for p in points {
        let e = sums.entry(p.position).or_default();
        e.0 += p.ratio_ctr;
        e.1 += p.ratio_cvr;
        e.2 += 1;
    }
    let seen = model.propensities();
    sums.into_iter()
        .map(|(position, (ctr, cvr, n))| SwapImpact {
            position,
            ratio_ctr: ctr / n as f64,
            ratio_cvr: cvr / n as f64,
            ratio_seen: seen
                .as_ref()
                .map(|s| s[SWAP_POSITION - 1] / s[position - 1]),
            n,
        })
        .collect()
}
