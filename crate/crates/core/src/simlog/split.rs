use std::collections::HashSet;

use rand::seq::SliceRandom;

use super::LogRecord;
use crate::error::{Error, Result};
use crate::nn::RngState;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<LogRecord>,
    pub validation: Vec<LogRecord>,
    pub test: Vec<LogRecord>,
}

/// Split at query granularity: every record of a query lands in the same part.
pub fn split_dataset(records: &[LogRecord], fractions: [f64; 3], seed: u64) -> Result<Split> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be nonnegative and sum to 1, got {fractions:?}"
        )));
    }
    let mut seen = HashSet::new();
    let mut queries: Vec<u64> = records
        .iter()
        .filter(|r| seen.insert(r.query_id))
        .map(|r| r.query_id)
        .collect();
    queries.shuffle(&mut RngState::new(seed).substream("split"));

    let n = queries.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Config(format!(
            "split of {n} queries with fractions {fractions:?} leaves an empty part"
        )));
    }
    let train_q: HashSet<u64> = queries[..n_train].iter().copied().collect();
    let val_q: HashSet<u64> = queries[n_train..n_train + n_val].iter().copied().collect();

    let mut split = Split {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for r in records {
        if train_q.contains(&r.query_id) {
            split.train.push(r.clone());
        } else if val_q.contains(&r.query_id) {
            split.validation.push(r.clone());
        } else {
            split.test.push(r.clone());
        }
    }
    Ok(split)
}
