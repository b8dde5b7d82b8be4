//! Ranking metrics and evaluation reports.
//!
//! Single-session primitives ([`prec_at_k`], [`mrr_at_k`]) feed
//! [`evaluate`], which averages them over a test set and additionally
//! breaks them down by the label item's price level. Reported values
//! are percentages rounded to two decimals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{ItemCatalog, Session};
use crate::error::{ConfigError, DataError, Error};

/// Indices of the `k` largest scores, descending. Equal scores rank
/// the lower index first; `k` beyond the score count is clamped.
pub fn rank_descending(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k.min(scores.len()));
    order
}

/// 1.0 if `target` appears in the first `k` entries of `ranked`,
/// else 0.0.
pub fn prec_at_k(ranked: &[usize], target: usize, k: usize) -> f64 {
    let horizon = k.min(ranked.len());
    if ranked[..horizon].contains(&target) {
        1.0
    } else {
        0.0
    }
}

/// Reciprocal rank of `target` if it appears in the first `k` entries
/// of `ranked` (rank 1 → 1.0), else 0.0.
pub fn mrr_at_k(ranked: &[usize], target: usize, k: usize) -> f64 {
    let horizon = k.min(ranked.len());
    match ranked[..horizon].iter().position(|&i| i == target) {
        Some(pos) => 1.0 / (pos + 1) as f64,
        None => 0.0,
    }
}

/// Anything that can rank catalog items for a session input.
pub trait Recommender {
    /// Top-`k` item indices, best first, no duplicates.
    fn rank(&self, session_input: &[usize], k: usize) -> Result<Vec<usize>, Error>;
}

impl Recommender for crate::model::FrozenModel {
    fn rank(&self, session_input: &[usize], k: usize) -> Result<Vec<usize>, Error> {
        Ok(self.predict_topk(session_input, k)?)
    }
}

/// Averaged hit rate and reciprocal rank at one cutoff, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub precision: f64,
    pub mrr: f64,
}

/// Metrics for the test sessions whose label item sits in one price
/// level, measured at cutoff 20.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelBucket {
    pub level: usize,
    /// Number of test sessions in this bucket (0 leaves the metrics
    /// at zero).
    pub sessions: usize,
    pub precision_at_20: f64,
    pub mrr_at_20: f64,
}

/// Full evaluation result for one recommender on one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub seed: u64,
    pub sessions: usize,
    /// Cutoff `k` → averaged metrics, in percent with 2 decimals.
    pub at: BTreeMap<usize, MetricPair>,
    /// Cutoff-20 metrics split by the label item's price level; the
    /// bucket sizes sum to `sessions`.
    pub by_level: Vec<LevelBucket>,
}

impl EvalReport {
    /// Render as an aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "model {}  (seed {}, {} test sessions)\n",
            self.model, self.seed, self.sessions
        ));
        out.push_str("  k     Prec@k    MRR@k\n");
        for (k, pair) in &self.at {
            out.push_str(&format!(
                "  {:<4}  {:>7.2}  {:>7.2}\n",
                k, pair.precision, pair.mrr
            ));
        }
        out.push_str("  price level  sessions  Prec@20   MRR@20\n");
        for bucket in &self.by_level {
            out.push_str(&format!(
                "  {:<11}  {:>8}  {:>7.2}  {:>7.2}\n",
                bucket.level, bucket.sessions, bucket.precision_at_20, bucket.mrr_at_20
            ));
        }
        out
    }
}

fn percent(fraction: f64) -> f64 {
    (fraction * 10_000.0).round() / 100.0
}

/// Average the ranking metrics of `recommender` over `test`.
///
/// Each session is ranked once at the largest needed cutoff; the
/// per-level breakdown always uses cutoff 20 and buckets sessions by
/// their label item's price level.
pub fn evaluate<R: Recommender>(
    recommender: &R,
    test: &[Session],
    ks: &[usize],
    catalog: &ItemCatalog,
    model_name: &str,
    seed: u64,
) -> Result<EvalReport, Error> {
    if test.is_empty() {
        return Err(DataError::EmptyTestSet.into());
    }
    if ks.is_empty() {
        return Err(ConfigError::Invalid("no metric cutoffs requested".into()).into());
    }
    let k_max = ks.iter().copied().max().unwrap().max(20);
    let levels = catalog.price_levels.max(1);

    let mut prec_sums = vec![0.0; ks.len()];
    let mut mrr_sums = vec![0.0; ks.len()];
    let mut level_counts = vec![0usize; levels];
    let mut level_prec = vec![0.0; levels];
    let mut level_mrr = vec![0.0; levels];

    for session in test {
        let ranked = recommender.rank(session.input(), k_max)?;
        let target = session.label();
        for (slot, &k) in ks.iter().enumerate() {
            prec_sums[slot] += prec_at_k(&ranked, target, k);
            mrr_sums[slot] += mrr_at_k(&ranked, target, k);
        }
        let level = catalog.price_level_of(target);
        level_counts[level] += 1;
        level_prec[level] += prec_at_k(&ranked, target, 20);
        level_mrr[level] += mrr_at_k(&ranked, target, 20);
    }

    let n = test.len() as f64;
    let at = ks
        .iter()
        .enumerate()
        .map(|(slot, &k)| {
            (
                k,
                MetricPair {
                    precision: percent(prec_sums[slot] / n),
                    mrr: percent(mrr_sums[slot] / n),
                },
            )
        })
        .collect();
    let by_level = (0..levels)
        .map(|level| {
            let count = level_counts[level];
            let denom = count.max(1) as f64;
            LevelBucket {
                level,
                sessions: count,
                precision_at_20: percent(level_prec[level] / denom),
                mrr_at_20: percent(level_mrr[level] / denom),
            }
        })
        .collect();
    Ok(EvalReport {
        model: model_name.to_string(),
        seed,
        sessions: test.len(),
        at,
        by_level,
    })
}
