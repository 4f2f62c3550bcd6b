use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One scored impression for a single task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample {
    pub query_id: u64,
    pub item_id: u64,
    /// 1-based logged position.
    pub position: usize,
    pub score: f64,
    pub label: bool,
    pub weight: f64,
}

/// Where the rank of a positive comes from in [`weighted_mrr`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankSource {
    /// Rank under the model's per-query ordering.
    #[default]
    Model,
    /// The logged position itself; every model scores the same under this.
    Logged,
}

/// Mann-Whitney statistic: the number of (positive, negative) pairs where the
/// positive scores higher, ties counting one half. Returns `(u, pairs)`.
fn mann_whitney(examples: &[&ScoredExample]) -> (f64, f64) {
    let mut order: Vec<&ScoredExample> = examples.to_vec();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));

    let mut rank_sum = 0.0;
    let mut positives = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].score == order[i].score {
            j += 1;
        }
        // tied block occupies ranks i+1..=j; twice its mean rank is i+1+j
        let twice_mid = (i + 1 + j) as f64;
        for e in &order[i..j] {
            if e.label {
                rank_sum += twice_mid;
                positives += 1;
            }
        }
        i = j;
    }
    let negatives = order.len() - positives;
    let p = positives as f64;
    let u = (rank_sum - p * (p + 1.0)) / 2.0;
    (u, p * negatives as f64)
}

fn check_scores(examples: &[ScoredExample]) -> Result<()> {
    match examples.iter().find(|e| !e.score.is_finite()) {
        Some(e) => Err(Error::Domain(format!(
            "non-finite score for item {}",
            e.item_id
        ))),
        None => Ok(()),
    }
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn auc(examples: &[ScoredExample]) -> Result<f64> {
    check_scores(examples)?;
    let refs: Vec<&ScoredExample> = examples.iter().collect();
    let (u, pairs) = mann_whitney(&refs);
    if pairs == 0.0 {
        return Err(Error::UndefinedMetric(
            "auc needs at least one positive and one negative".into(),
        ));
    }
    Ok(u / pairs)
}

/// AUC within each logged-position bucket, aggregated with weights equal to
/// each bucket's positive-negative pair count. Single-class buckets are
/// skipped.
pub fn pauc(examples: &[ScoredExample]) -> Result<f64> {
    check_scores(examples)?;
    let mut buckets: BTreeMap<usize, Vec<&ScoredExample>> = BTreeMap::new();
    for e in examples {
        buckets.entry(e.position).or_default().push(e);
    }
    let (mut u, mut pairs) = (0.0, 0.0);
    for bucket in buckets.values() {
        let (bu, bp) = mann_whitney(bucket);
        u += bu;
        pairs += bp;
    }
    if pairs == 0.0 {
        return Err(Error::UndefinedMetric(
            "pauc needs a position with both classes".into(),
        ));
    }
    Ok(u / pairs)
}

/// Examples grouped by query, each group sorted best-first: descending score,
/// ties by ascending item id.
fn ranked_queries(examples: &[ScoredExample]) -> BTreeMap<u64, Vec<&ScoredExample>> {
    let mut queries: BTreeMap<u64, Vec<&ScoredExample>> = BTreeMap::new();
    for e in examples {
        queries.entry(e.query_id).or_default().push(e);
    }
    for items in queries.values_mut() {
        items.sort_by(|a, b| match b.score.total_cmp(&a.score) {
            Ordering::Equal => a.item_id.cmp(&b.item_id),
            o => o,
        });
    }
    queries
}

/// Mean over queries with a positive of the reciprocal rank of the first
/// positive.
pub fn mrr(examples: &[ScoredExample]) -> Result<f64> {
    check_scores(examples)?;
    let (mut total, mut n) = (0.0, 0usize);
    for items in ranked_queries(examples).values() {
        if let Some(rank) = items.iter().position(|e| e.label) {
            total += 1.0 / (rank + 1) as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "mrr: no query has a positive".into(),
        ));
    }
    Ok(total / n as f64)
}

/// `Σ w_i / rank_i / Σ w_i` over every positive.
pub fn weighted_mrr(examples: &[ScoredExample], source: RankSource) -> Result<f64> {
    check_scores(examples)?;
    if let Some(e) = examples
        .iter()
        .find(|e| !(e.weight > 0.0 && e.weight.is_finite()))
    {
        return Err(Error::Domain(format!(
            "weight {} for item {} is not positive",
            e.weight, e.item_id
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for items in ranked_queries(examples).values() {
        for (i, e) in items.iter().enumerate().filter(|(_, e)| e.label) {
            let rank = match source {
                RankSource::Model => i + 1,
                RankSource::Logged => e.position,
            };
            num += e.weight / rank as f64;
            den += e.weight;
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("weighted mrr: no positives".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(query_id: u64, item_id: u64, position: usize, score: f64, label: bool) -> ScoredExample {
        ScoredExample {
            query_id,
            item_id,
            position,
            score,
            label,
            weight: 1.0,
        }
    }

    #[test]
    fn auc_simple_cases() {
        let sep = [ex(0, 0, 1, 0.9, true), ex(0, 1, 1, 0.1, false)];
        assert_eq!(auc(&sep).unwrap(), 1.0);
        let tied = [
            ex(0, 0, 1, 0.5, true),
            ex(0, 1, 1, 0.5, false),
            ex(0, 2, 1, 0.5, false),
        ];
        assert_eq!(auc(&tied).unwrap(), 0.5);
        assert!(matches!(
            auc(&[ex(0, 0, 1, 0.5, true)]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(auc(&[ex(0, 0, 1, f64::NAN, true), ex(0, 1, 1, 0.1, false)]).is_err());
    }

    #[test]
    fn pauc_hand_counted_buckets() {
        // position 1: pos 0.8 vs negs 0.9, 0.3 → 1 of 2 pairs
        // position 2: pos 0.4, 0.2 vs neg 0.3 → 1 of 2 pairs
        let data = [
            ex(0, 0, 1, 0.8, true),
            ex(0, 1, 1, 0.9, false),
            ex(0, 2, 1, 0.3, false),
            ex(1, 3, 2, 0.4, true),
            ex(1, 4, 2, 0.2, true),
            ex(1, 5, 2, 0.3, false),
        ];
        assert_eq!(pauc(&data).unwrap(), 0.5);
        let one_class = [ex(0, 0, 1, 0.8, true), ex(0, 1, 2, 0.1, false)];
        assert!(pauc(&one_class).is_err());
    }

    #[test]
    fn mrr_definition_cases() {
        let q: Vec<_> = (0..5)
            .map(|i| ex(7, i, 1, 1.0 - i as f64 * 0.1, i == 3))
            .collect();
        assert_eq!(mrr(&q).unwrap(), 0.25);
        // tie on score: lower item id ranks first
        let tie = [ex(0, 5, 1, 0.5, true), ex(0, 2, 2, 0.5, false)];
        assert_eq!(mrr(&tie).unwrap(), 0.5);
        // queries without positives do not count
        let mixed = [ex(0, 0, 1, 0.9, true), ex(1, 1, 1, 0.9, false)];
        assert_eq!(mrr(&mixed).unwrap(), 1.0);
    }

    #[test]
    fn weighted_mrr_definition_cases() {
        let mut a = ex(0, 0, 3, 0.9, true);
        a.weight = 1.0;
        let mut b = ex(0, 1, 1, 0.5, true);
        b.weight = 3.0;
        let data = [a, b, ex(0, 2, 2, 0.1, false)];
        assert_eq!(weighted_mrr(&data, RankSource::Model).unwrap(), 0.625);
        // logged ranks are 3 and 1
        let logged = (1.0 / 3.0 + 3.0) / 4.0;
        assert!((weighted_mrr(&data, RankSource::Logged).unwrap() - logged).abs() < 1e-15);

        let mut single = ex(0, 0, 1, 0.2, true);
        single.weight = 9.0;
        let data = [single, ex(0, 1, 2, 0.8, false)];
        assert_eq!(weighted_mrr(&data, RankSource::Model).unwrap(), 0.5);

        let mut bad = ex(0, 0, 1, 0.2, true);
        bad.weight = 0.0;
        assert!(weighted_mrr(&[bad], RankSource::Model).is_err());
    }
}
