//! Run configuration: `key = value` lines under `[sim]`, `[model]`, `[train]`
//! and `[bench]` headers, plus top-level `seed` and `out_dir`. Every key has
//! a default; unknown keys and bad values are all reported together.

use std::path::{Path, PathBuf};

use pacc::models::{parse_transfer_kind, ModelConfig, ModelKind};
use pacc::nn::{OptimizerKind, TransferKind};
use pacc::simlog::GenConfig;
use pacc::training::{RestrictionMode, TrainConfig};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub d_emb: usize,
    pub d_tower: usize,
    pub d_att: usize,
    pub tower_depth: usize,
    pub transfer: TransferKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::new(ModelKind::PaccPe, 1, 1);
        Self {
            kind: d.kind,
            d_emb: d.d_emb,
            d_tower: d.d_tower,
            d_att: d.d_att,
            tower_depth: d.tower_depth,
            transfer: d.transfer,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSection {
    /// Number of seeds; the grid is `seed, seed+1, ...`.
    pub repeats: usize,
    pub models: Vec<ModelKind>,
    pub swap_sample: usize,
    pub impact_sample: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            repeats: 3,
            models: ModelKind::ALL.to_vec(),
            swap_sample: 500,
            impact_sample: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub sim: GenConfig,
    /// Train / validation / test fractions, split by query.
    pub split: [f64; 3],
    pub model: ModelSection,
    pub train: TrainConfig,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            sim: GenConfig::default(),
            split: [0.8, 0.1, 0.1],
            model: ModelSection::default(),
            train: TrainConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            CliError::Usage(format!("config syntax: {}", e.message()))
        })?;
        let mut cfg = RunConfig::default();
        let mut r = Reader::default();

        for (key, value) in &table {
            match (key.as_str(), value) {
                ("seed", v) => r.set(key, v, &mut cfg.seed, as_u64),
                ("out_dir", v) => r.set(key, v, &mut cfg.out_dir, |v| as_str(v).map(PathBuf::from)),
                ("sim", Value::Table(t)) => r.sim(t, &mut cfg),
                ("model", Value::Table(t)) => r.model(t, &mut cfg.model),
                ("train", Value::Table(t)) => r.train(t, &mut cfg.train),
                ("bench", Value::Table(t)) => r.bench(t, &mut cfg.bench),
                _ => r.problems.push(format!("unknown key `{key}`")),
            }
        }
        cfg.apply_seed();
        r.check(cfg.sim.validate().err());
        r.check(cfg.model_config(cfg.model.kind).validate().err());
        r.check(cfg.train.validate().err());
        if cfg.split.iter().any(|f| *f < 0.0) || (cfg.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            r.problems.push(format!(
                "sim.split must be nonnegative and sum to 1, got {:?}",
                cfg.split
            ));
        }
        if cfg.bench.repeats == 0 {
            r.problems.push("bench.repeats must be positive".into());
        }
        if cfg.bench.models.is_empty() {
            r.problems.push("bench.models must not be empty".into());
        }

        if r.problems.is_empty() {
            Ok(cfg)
        } else {
            Err(CliError::Usage(format!(
                "invalid config:\n  {}",
                r.problems.join("\n  ")
            )))
        }
    }

    /// Propagate the top-level seed to the simulator and trainer.
    pub fn apply_seed(&mut self) {
        self.sim.seed = self.seed;
        self.train.seed = self.seed;
    }

    pub fn model_config(&self, kind: ModelKind) -> ModelConfig {
        ModelConfig {
            kind,
            d_emb: self.model.d_emb,
            d_tower: self.model.d_tower,
            d_att: self.model.d_att,
            tower_depth: self.model.tower_depth,
            transfer: self.model.transfer,
            dropout: self.train.dropout,
            ..ModelConfig::new(kind, self.sim.feature_dim, self.sim.max_position)
        }
    }
}

#[derive(Default)]
struct Reader {
    problems: Vec<String>,
}

impl Reader {
    fn set<T>(
        &mut self,
        key: &str,
        v: &Value,
        slot: &mut T,
        conv: impl Fn(&Value) -> Result<T, String>,
    ) {
        match conv(v) {
            Ok(x) => *slot = x,
            Err(e) => self.problems.push(format!("`{key}`: {e}")),
        }
    }

    fn check(&mut self, err: Option<pacc::Error>) {
        if let Some(e) = err {
            self.problems.push(e.to_string());
        }
    }

    fn unknown(&mut self, section: &str, key: &str) {
        self.problems.push(format!("unknown key `{section}.{key}`"));
    }

    fn sim(&mut self, t: &Table, cfg: &mut RunConfig) {
        let s = &mut cfg.sim;
        for (k, v) in t {
            let key = format!("sim.{k}");
            match k.as_str() {
                "num_queries" => self.set(&key, v, &mut s.num_queries, as_usize),
                "items_per_query" => self.set(&key, v, &mut s.items_per_query, as_usize),
                "feature_dim" => self.set(&key, v, &mut s.feature_dim, as_usize),
                "max_position" => self.set(&key, v, &mut s.max_position, as_usize),
                "exam_exponent" => self.set(&key, v, &mut s.exam_exponent, as_f64),
                "policy_noise" => self.set(&key, v, &mut s.policy_noise, as_f64),
                "ctr_weights" => self.set(&key, v, &mut s.ctr_weights, as_f64_list),
                "cvr_weights" => self.set(&key, v, &mut s.cvr_weights, as_f64_list),
                "split" => self.set(&key, v, &mut cfg.split, |v| {
                    let l = as_f64_list(v)?;
                    l.try_into()
                        .map_err(|l: Vec<f64>| format!("expected 3 fractions, got {}", l.len()))
                }),
                _ => self.unknown("sim", k),
            }
        }
    }

    fn model(&mut self, t: &Table, m: &mut ModelSection) {
        for (k, v) in t {
            let key = format!("model.{k}");
            match k.as_str() {
                "kind" => self.set(&key, v, &mut m.kind, |v| {
                    as_str(v)?.parse::<ModelKind>().map_err(|e| e.to_string())
                }),
                "d_emb" => self.set(&key, v, &mut m.d_emb, as_usize),
                "d_tower" => self.set(&key, v, &mut m.d_tower, as_usize),
                "d_att" => self.set(&key, v, &mut m.d_att, as_usize),
                "tower_depth" => self.set(&key, v, &mut m.tower_depth, as_usize),
                "transfer" => self.set(&key, v, &mut m.transfer, |v| {
                    parse_transfer_kind(&as_str(v)?).map_err(|e| e.to_string())
                }),
                _ => self.unknown("model", k),
            }
        }
    }

    fn train(&mut self, t: &Table, c: &mut TrainConfig) {
        for (k, v) in t {
            let key = format!("train.{k}");
            match k.as_str() {
                "epochs" => self.set(&key, v, &mut c.epochs, as_usize),
                "batch_size" => self.set(&key, v, &mut c.batch_size, as_usize),
                "learning_rate" => self.set(&key, v, &mut c.learning_rate, as_f64),
                "dropout" => self.set(&key, v, &mut c.dropout, as_f64),
                "restriction" => self.set(&key, v, &mut c.restriction, |v| {
                    as_str(v)?
                        .parse::<RestrictionMode>()
                        .map_err(|e| e.to_string())
                }),
                "restriction_weight" => self.set(&key, v, &mut c.restriction_weight, as_f64),
                "patience" => self.set(&key, v, &mut c.patience, as_usize),
                "optimizer" => self.set(&key, v, &mut c.optimizer, |v| match as_str(v)?.as_str() {
                    "adam" => Ok(OptimizerKind::adam()),
                    "sgd" => Ok(OptimizerKind::Sgd),
                    o => Err(format!("unknown optimizer `{o}` (expected adam or sgd)")),
                }),
                _ => self.unknown("train", k),
            }
        }
    }

    fn bench(&mut self, t: &Table, b: &mut BenchSection) {
        for (k, v) in t {
            let key = format!("bench.{k}");
            match k.as_str() {
                "repeats" => self.set(&key, v, &mut b.repeats, as_usize),
                "models" => self.set(&key, v, &mut b.models, |v| match v {
                    Value::Array(a) => a
                        .iter()
                        .map(|x| as_str(x)?.parse::<ModelKind>().map_err(|e| e.to_string()))
                        .collect(),
                    _ => Err("expected a list of model names".into()),
                }),
                "swap_sample" => self.set(&key, v, &mut b.swap_sample, as_usize),
                "impact_sample" => self.set(&key, v, &mut b.impact_sample, as_usize),
                _ => self.unknown("bench", k),
            }
        }
    }
}

fn as_u64(v: &Value) -> Result<u64, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(format!("expected a nonnegative integer, got {v}")),
    }
}

fn as_usize(v: &Value) -> Result<usize, String> {
    as_u64(v).map(|x| x as usize)
}

fn as_f64(v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(format!("expected a number, got {v}")),
    }
}

fn as_f64_list(v: &Value) -> Result<Vec<f64>, String> {
    match v {
        Value::Array(a) => a.iter().map(as_f64).collect(),
        _ => Err(format!("expected a list of numbers, got {v}")),
    }
}

fn as_str(v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        _ => Err(format!("expected a string, got {v}")),
    }
}
