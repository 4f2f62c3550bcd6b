//! Synthetic position-biased click/conversion logs with known ground truth.
//!
//! Per query, `K` items get standard-normal features. The logging policy ranks
//! them by `w_ctr·[f;1] + σ·N(0,1)`, which couples position with relevance.
//! Each impression is examined with probability `θ_p = (1/p)^γ`; an examined
//! item is clicked with `sigmoid(w_ctr·[f;1])`, and a clicked item converts
//! with `sigmoid(w_cvr·[f;1])`.

mod io;
mod split;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub use io::{read_logs, read_propensity, write_logs, write_propensity};
pub use split::{split_dataset, Split};

use crate::error::{Error, Result};
use crate::nn::RngState;

/// One impression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub query_id: u64,
    pub item_id: u64,
    pub features: Vec<f64>,
    /// 1-based logged position.
    pub position: usize,
    pub click: bool,
    pub conversion: bool,
}

/// Examination probability per position, `probabilities[p-1] = P(s|p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityTable {
    probabilities: Vec<f64>,
}

impl PropensityTable {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Domain("empty propensity table".into()));
        }
        if let Some(bad) = probabilities.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::Domain(format!("propensity {bad} outside (0,1]")));
        }
        Ok(Self { probabilities })
    }

    /// `θ_p = (1/p)^γ` for `p = 1..=max_position`.
    pub fn inverse_power(max_position: usize, exponent: f64) -> Result<Self> {
        Self::new(
            (1..=max_position)
                .map(|p| (1.0 / p as f64).powf(exponent))
                .collect(),
        )
    }

    pub fn max_position(&self) -> usize {
        self.probabilities.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn get(&self, position: usize) -> Result<f64> {
        check_position(position, self.max_position())?;
        Ok(self.probabilities[position - 1])
    }

    /// `P(s|p) / P(s|1)` for every position.
    pub fn relative_to_first(&self) -> Vec<f64> {
        let first = self.probabilities[0];
        self.probabilities.iter().map(|p| p / first).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub num_queries: usize,
    pub items_per_query: usize,
    pub feature_dim: usize,
    pub max_position: usize,
    pub exam_exponent: f64,
    /// `d` weights followed by the bias.
    pub ctr_weights: Vec<f64>,
    pub cvr_weights: Vec<f64>,
    /// Standard deviation of the ranking noise; `f64::INFINITY` gives a
    /// uniformly random ranking.
    pub policy_noise: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            num_queries: 2000,
            items_per_query: 10,
            feature_dim: DEFAULT_FEATURE_DIM,
            max_position: 10,
            exam_exponent: 1.0,
            ctr_weights: DEFAULT_CTR_WEIGHTS.to_vec(),
            cvr_weights: DEFAULT_CVR_WEIGHTS.to_vec(),
            policy_noise: 1.0,
            seed: 0,
        }
    }
}

pub const DEFAULT_FEATURE_DIM: usize = 8;
pub const DEFAULT_CTR_WEIGHTS: [f64; 9] = [1.0, 0.8, 0.6, 0.4, 0.0, 0.0, 0.0, 0.0, -2.7];
pub const DEFAULT_CVR_WEIGHTS: [f64; 9] = [0.0, 0.0, -0.5, 0.0, 1.0, 0.8, 0.6, 0.0, -2.8];

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_queries == 0 {
            problems.push("num_queries must be positive".to_string());
        }
        if self.items_per_query == 0 {
            problems.push("items_per_query must be positive".to_string());
        }
        if self.items_per_query > self.max_position {
            problems.push(format!(
                "items_per_query {} exceeds max_position {}",
                self.items_per_query, self.max_position
            ));
        }
        if self.feature_dim == 0 {
            problems.push("feature_dim must be positive".to_string());
        }
        if !(self.exam_exponent >= 0.0 && self.exam_exponent.is_finite()) {
            problems.push(format!(
                "exam_exponent must be >= 0, got {}",
                self.exam_exponent
            ));
        }
        if self.policy_noise.is_nan() || self.policy_noise < 0.0 {
            problems.push(format!(
                "policy_noise must be >= 0, got {}",
                self.policy_noise
            ));
        }
        for (name, w) in [
            ("ctr_weights", &self.ctr_weights),
            ("cvr_weights", &self.cvr_weights),
        ] {
            if w.len() != self.feature_dim + 1 {
                problems.push(format!(
                    "{name} needs feature_dim + 1 = {} entries, got {}",
                    self.feature_dim + 1,
                    w.len()
                ));
            } else if w.iter().any(|x| !x.is_finite()) {
                problems.push(format!("{name} must be finite"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// True per-item probability of a click once examined.
    pub fn ctr_given_seen(&self, features: &[f64]) -> f64 {
        logistic(affine(&self.ctr_weights, features))
    }

    /// True per-item probability of a conversion once clicked.
    pub fn cvr_given_click(&self, features: &[f64]) -> f64 {
        logistic(affine(&self.cvr_weights, features))
    }
}

fn affine(w: &[f64], f: &[f64]) -> f64 {
    let (bias, coef) = w.split_last().expect("nonempty weights");
    coef.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() + bias
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Round to the 9 significant digits used by the log file format so that
/// generated data survives a file round trip unchanged.
pub fn quantize_feature(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub fn generate_logs(cfg: &GenConfig) -> Result<(Vec<LogRecord>, PropensityTable)> {
    cfg.validate()?;
    let theta = PropensityTable::inverse_power(cfg.max_position, cfg.exam_exponent)?;
    let root = RngState::new(cfg.seed);
    let k = cfg.items_per_query;
    let mut records = Vec::with_capacity(cfg.num_queries * k);

    for q in 0..cfg.num_queries {
        let mut rng = root.indexed("generation", q as u64);
        let features: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..cfg.feature_dim)
                    .map(|_| quantize_feature(rng.sample(StandardNormal)))
                    .collect()
            })
            .collect();

        let mut order: Vec<usize> = (0..k).collect();
        if cfg.policy_noise.is_infinite() {
            order.shuffle(&mut rng);
        } else {
            let scores: Vec<f64> = features
                .iter()
                .map(|f| {
                    let noise: f64 = rng.sample(StandardNormal);
                    affine(&cfg.ctr_weights, f) + cfg.policy_noise * noise
                })
                .collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        }

        let mut positions = vec![0; k];
        for (rank, &item) in order.iter().enumerate() {
            positions[item] = rank + 1;
        }

        let mut query_records: Vec<LogRecord> = features
            .into_iter()
            .enumerate()
            .map(|(j, f)| {
                let position = positions[j];
                let seen = rng.random::<f64>() < theta.probabilities[position - 1];
                let click_draw = rng.random::<f64>() < cfg.ctr_given_seen(&f);
                let conv_draw = rng.random::<f64>() < cfg.cvr_given_click(&f);
                let click = seen && click_draw;
                LogRecord {
                    query_id: q as u64,
                    item_id: (q * k + j) as u64,
                    features: f,
                    position,
                    click,
                    conversion: click && conv_draw,
                }
            })
            .collect();
        query_records.sort_by_key(|r| r.position);
        records.extend(query_records);
    }
    Ok((records, theta))
}

fn check_position(position: usize, max_position: usize) -> Result<()> {
    if position == 0 || position > max_position {
        Err(Error::Domain(format!(
            "position {position} outside 1..={max_position}"
        )))
    } else {
        Ok(())
    }
}

/// Binary vector with a single 1 at index `position - 1`.
pub fn one_hot_position(position: usize, max_position: usize) -> Result<Vec<f64>> {
    check_position(position, max_position)?;
    let mut v = vec![0.0; max_position];
    v[position - 1] = 1.0;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn one_hot_cases() {
        assert_eq!(one_hot_position(1, 4).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(one_hot_position(4, 4).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        for p in 1..=7 {
            assert_eq!(one_hot_position(p, 7).unwrap().iter().sum::<f64>(), 1.0);
        }
        assert!(matches!(one_hot_position(0, 4), Err(Error::Domain(_))));
        assert!(matches!(one_hot_position(5, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn theta_closed_form() {
        let t = PropensityTable::inverse_power(10, 1.0).unwrap();
        for (i, th) in t.probabilities().iter().enumerate() {
            assert!((th - 1.0 / (i + 1) as f64).abs() < 1e-15);
        }
        let flat = PropensityTable::inverse_power(10, 0.0).unwrap();
        assert!(flat.probabilities().iter().all(|&p| p == 1.0));
        assert!(PropensityTable::new(vec![0.5, 0.0]).is_err());
        assert!(PropensityTable::new(vec![1.5]).is_err());
    }

    #[test]
    fn rejects_too_many_items() {
        let cfg = GenConfig {
            items_per_query: 11,
            ..GenConfig::default()
        };
        assert!(matches!(generate_logs(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn structural_invariants() {
        let cfg = GenConfig {
            num_queries: 300,
            ..GenConfig::default()
        };
        let (records, _) = generate_logs(&cfg).unwrap();
        assert_eq!(records.len(), 300 * 10);
        let mut by_query: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for r in &records {
            assert!(!r.conversion || r.click);
            assert!(r.position >= 1 && r.position <= cfg.max_position);
            assert_eq!(r.features.len(), cfg.feature_dim);
            by_query.entry(r.query_id).or_default().push(r.position);
        }
        for (_, mut ps) in by_query {
            ps.sort_unstable();
            assert_eq!(ps, (1..=10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = GenConfig {
            num_queries: 50,
            ..GenConfig::default()
        };
        assert_eq!(generate_logs(&cfg).unwrap(), generate_logs(&cfg).unwrap());
        let other = GenConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(
            generate_logs(&cfg).unwrap().0,
            generate_logs(&other).unwrap().0
        );
    }

    #[test]
    fn default_label_rates_are_realistic() {
        let cfg = GenConfig {
            num_queries: 20_000,
            ..GenConfig::default()
        };
        let (records, _) = generate_logs(&cfg).unwrap();
        let n = records.len() as f64;
        let ctr = records.iter().filter(|r| r.click).count() as f64 / n;
        let cvr = records.iter().filter(|r| r.conversion).count() as f64 / n;
        assert!((0.03..0.08).contains(&ctr), "ctr {ctr}");
        assert!((0.003..0.008).contains(&cvr), "cvr {cvr}");
    }

    #[test]
    fn no_examination_bias_when_gamma_zero() {
        // With θ ≡ 1 the click rate at each position matches the mean true
        // click probability of the items placed there.
        let cfg = GenConfig {
            num_queries: 20_000,
            exam_exponent: 0.0,
            ..GenConfig::default()
        };
        let (records, theta) = generate_logs(&cfg).unwrap();
        assert!(theta.probabilities().iter().all(|&p| p == 1.0));
        for p in [1, 5, 10] {
            let at: Vec<&LogRecord> = records.iter().filter(|r| r.position == p).collect();
            let n = at.len() as f64;
            let empirical = at.iter().filter(|r| r.click).count() as f64 / n;
            let expected = at
                .iter()
                .map(|r| cfg.ctr_given_seen(&r.features))
                .sum::<f64>()
                / n;
            let se = (expected * (1.0 - expected) / n).sqrt();
            assert!(
                (empirical - expected).abs() < 4.0 * se,
                "p={p}: {empirical} vs {expected}"
            );
        }
    }
}
