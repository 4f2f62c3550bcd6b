//! PACC, PACC-PE and two simplified multi-task baselines.
//!
//! Every model exposes the same surface: an inference forward
//! ([`Model::predict`]), a multi-position forward that evaluates the feature
//! path once ([`Model::predict_positions`]), and a traced training forward
//! whose [`Trace`] feeds [`Model::backward`].
//!
//! Parameter order (used by optimizers and checkpoints) is the order the
//! components are listed in each model's `Params` impl: embedding, towers,
//! heads, information-transfer blocks, position components.

mod baseline;
mod head;
mod pacc;
mod pacc_pe;

use std::fmt;
use std::str::FromStr;

pub use baseline::{BaselineModel, BaselineTrace};
pub use head::Head;
pub use pacc::{PaccModel, PaccTrace};
pub use pacc_pe::{PaccPeModel, PaccPeTrace};

use crate::error::{Error, Result};
use crate::nn::{Params, RngState, TransferKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Pacc,
    PaccPe,
    /// Multi-task baseline that never sees the position.
    NaiveMt,
    /// Multi-task baseline with the one-hot position appended to the features.
    PosFeatMt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Pacc,
        ModelKind::PaccPe,
        ModelKind::NaiveMt,
        ModelKind::PosFeatMt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Pacc => "pacc",
            ModelKind::PaccPe => "pacc-pe",
            ModelKind::NaiveMt => "naive",
            ModelKind::PosFeatMt => "posfeat",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model `{s}` (expected pacc, pacc-pe, naive or posfeat)"
                ))
            })
    }
}

pub fn transfer_kind_name(kind: TransferKind) -> &'static str {
    match kind {
        TransferKind::Attention => "attention",
        TransferKind::Gate => "gate",
    }
}

pub fn parse_transfer_kind(s: &str) -> Result<TransferKind> {
    match s {
        "attention" => Ok(TransferKind::Attention),
        "gate" => Ok(TransferKind::Gate),
        other => Err(Error::Config(format!(
            "unknown transfer `{other}` (expected attention or gate)"
        ))),
    }
}

/// Architecture hyperparameters. The transferred-info vectors (INFO_ctr,
/// INFO_pos) share the tower width so both attention tokens have one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub max_position: usize,
    pub d_emb: usize,
    pub d_tower: usize,
    pub d_att: usize,
    pub tower_depth: usize,
    pub dropout: f64,
    pub transfer: TransferKind,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, feature_dim: usize, max_position: usize) -> Self {
        Self {
            kind,
            feature_dim,
            max_position,
            d_emb: 32,
            d_tower: 32,
            d_att: 16,
            tower_depth: 3,
            dropout: 0.2,
            transfer: TransferKind::Attention,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("max_position", self.max_position),
            ("d_emb", self.d_emb),
            ("d_tower", self.d_tower),
            ("d_att", self.d_att),
            ("tower_depth", self.tower_depth),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout must be in [0,1), got {}", self.dropout));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Per-impression output bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// `P(click | f, p)`
    pub p_ctr: f64,
    /// `P(conversion | f, p)` over all impressions.
    pub p_cvr: f64,
    /// PACC only: `P(seen | p)`.
    pub p_seen: Option<f64>,
    /// PACC only: `P(click | f, seen)`.
    pub p_ctr_given_seen: Option<f64>,
    /// PACC only: `P(conversion | f, click, seen)`.
    pub p_cvr_given_click_seen: Option<f64>,
}

impl Prediction {
    pub fn plain(p_ctr: f64, p_cvr: f64) -> Self {
        Self {
            p_ctr,
            p_cvr,
            p_seen: None,
            p_ctr_given_seen: None,
            p_cvr_given_click_seen: None,
        }
    }

    pub fn task(&self, task: Task) -> f64 {
        match task {
            Task::Ctr => self.p_ctr,
            Task::Cvr => self.p_cvr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Ctr,
    Cvr,
}

impl Task {
    pub const BOTH: [Task; 2] = [Task::Ctr, Task::Cvr];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Ctr => "ctr",
            Task::Cvr => "cvr",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cached intermediates of a training-mode forward pass.
#[derive(Debug, Clone)]
pub enum Trace {
    Pacc(PaccTrace),
    PaccPe(PaccPeTrace),
    Baseline(BaselineTrace),
}

impl Trace {
    pub fn prediction(&self) -> &Prediction {
        match self {
            Trace::Pacc(t) => &t.prediction,
            Trace::PaccPe(t) => &t.prediction,
            Trace::Baseline(t) => &t.prediction,
        }
    }

    /// Distance of the nearest ReLU pre-activation from its kink.
    pub fn relu_margin(&self) -> f64 {
        match self {
            Trace::Pacc(t) => t.relu_margin(),
            Trace::PaccPe(t) => t.relu_margin(),
            Trace::Baseline(t) => t.relu_margin(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Pacc(PaccModel),
    PaccPe(PaccPeModel),
    Baseline(BaselineModel),
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        Ok(match config.kind {
            ModelKind::Pacc => Model::Pacc(PaccModel::new(config, rng)),
            ModelKind::PaccPe => Model::PaccPe(PaccPeModel::new(config, rng)),
            ModelKind::NaiveMt | ModelKind::PosFeatMt => {
                Model::Baseline(BaselineModel::new(config, rng))
            }
        })
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Pacc(m) => &m.config,
            Model::PaccPe(m) => &m.config,
            Model::Baseline(m) => &m.config,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.config().kind
    }

    fn check_input(&self, features: &[f64], position: usize) -> Result<()> {
        let cfg = self.config();
        crate::error::shape_check("feature vector", cfg.feature_dim, features.len())?;
        if position == 0 || position > cfg.max_position {
            return Err(Error::Domain(format!(
                "position {position} outside 1..={}",
                cfg.max_position
            )));
        }
        Ok(())
    }

    /// Inference-mode forward.
    pub fn predict(&self, features: &[f64], position: usize) -> Result<Prediction> {
        Ok(self.predict_positions(features, &[position])?[0])
    }

    /// Inference-mode forwards of one item at several positions; the
    /// position-free part of the graph is evaluated once.
    pub fn predict_positions(
        &self,
        features: &[f64],
        positions: &[usize],
    ) -> Result<Vec<Prediction>> {
        for &p in positions {
            self.check_input(features, p)?;
        }
        match self {
            Model::Pacc(m) => m.predict_positions(features, positions),
            Model::PaccPe(m) => m.predict_positions(features, positions),
            Model::Baseline(m) => m.predict_positions(features, positions),
        }
    }

    /// Forward pass that records everything [`Model::backward`] needs.
    /// `dropout_rng = None` disables dropout.
    pub fn forward_trace(
        &self,
        features: &[f64],
        position: usize,
        dropout_rng: Option<&mut RngState>,
    ) -> Result<Trace> {
        self.check_input(features, position)?;
        match self {
            Model::Pacc(m) => m
                .forward_trace(features, position, dropout_rng)
                .map(Trace::Pacc),
            Model::PaccPe(m) => m
                .forward_trace(features, position, dropout_rng)
                .map(Trace::PaccPe),
            Model::Baseline(m) => m
                .forward_trace(features, position, dropout_rng)
                .map(Trace::Baseline),
        }
    }

    /// Accumulate parameter gradients given `∂L/∂p_ctr` and `∂L/∂p_cvr`.
    pub fn backward(&mut self, trace: &Trace, grad_ctr: f64, grad_cvr: f64) -> Result<()> {
        match (self, trace) {
            (Model::Pacc(m), Trace::Pacc(t)) => m.backward(t, grad_ctr, grad_cvr),
            (Model::PaccPe(m), Trace::PaccPe(t)) => m.backward(t, grad_ctr, grad_cvr),
            (Model::Baseline(m), Trace::Baseline(t)) => m.backward(t, grad_ctr, grad_cvr),
            _ => Err(Error::State(
                "trace was produced by a different model kind".into(),
            )),
        }
    }

    /// Learned `P(s|p)` for `p = 1..=max_position` (PACC only).
    pub fn propensities(&self) -> Option<Vec<f64>> {
        match self {
            Model::Pacc(m) => Some(m.propensities()),
            _ => None,
        }
    }
}

impl Params for Model {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Model::Pacc(m) => m.visit(f),
            Model::PaccPe(m) => m.visit(f),
            Model::Baseline(m) => m.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        match self {
            Model::Pacc(m) => m.visit_mut(f),
            Model::PaccPe(m) => m.visit_mut(f),
            Model::Baseline(m) => m.visit_mut(f),
        }
    }
}

/// Predictions for the same item at its logged position and at `swap_position`.
pub fn counterfactual_forward(
    model: &Model,
    features: &[f64],
    logged_position: usize,
    swap_position: usize,
) -> Result<(Prediction, Prediction)> {
    let preds = model.predict_positions(features, &[logged_position, swap_position])?;
    Ok((preds[0], preds[1]))
}
