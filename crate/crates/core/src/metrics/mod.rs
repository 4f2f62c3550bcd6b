//! Ranking metrics (AUC, position-wise AUC, MRR, propensity-weighted MRR)
//! and the per-model weights they use.

mod ranking;
mod report;
mod weights;

pub use ranking::{auc, mrr, pauc, weighted_mrr, RankSource, ScoredExample};
pub use report::{
    evaluate, scored_examples, MetricsReport, ScorePosition, TaskMetrics, REFERENCE_POSITION,
};
pub use weights::{counterfactual_weights, model_weights, pacc_weights, Weights, MIN_DENOMINATOR};
