//! Inspection record of one forward pass.
//!
//! Every forward entry point accepts an optional [`ForwardTrace`];
//! when present, intermediate quantities are copied out of the tape as
//! they are produced. Tests use [`ForwardTrace::check_invariants`] to
//! assert structural properties that must hold for *any* parameter
//! values — attention weights form distributions, gates stay inside
//! the open unit interval, couplings stay inside `[-1, 1]`, and scores
//! are a probability vector.

use crate::tensor::Tensor;

/// Intermediates of one forward pass; see the module docs.
#[derive(Clone, Debug, Default)]
pub struct ForwardTrace {
    /// Node tables after message passing (set when propagation ran
    /// under this trace).
    pub item_states: Option<Tensor>,
    pub price_states: Option<Tensor>,
    pub category_states: Option<Tensor>,
    /// Every softmax weight vector produced by neighbor aggregation.
    pub aggregation_weights: Vec<Vec<f64>>,
    /// Every fusion-gate entry from message passing.
    pub gate_values: Vec<f64>,
    /// Every row of every self-attention weight matrix.
    pub attention_rows: Vec<Vec<f64>>,
    /// Position weights of the interest read-out.
    pub interest_weights: Vec<f64>,
    /// Couplings and gates of the co-guided fusion.
    pub product_coupling: Vec<f64>,
    pub sum_coupling: Vec<f64>,
    pub price_gate: Vec<f64>,
    pub interest_gate: Vec<f64>,
    pub price_mix: Vec<f64>,
    pub interest_mix: Vec<f64>,
    /// Preferences before fusion.
    pub price_pref_raw: Vec<f64>,
    pub interest_pref_raw: Vec<f64>,
    /// Preferences actually used for scoring.
    pub price_pref: Vec<f64>,
    pub interest_pref: Vec<f64>,
    /// Scores before and after normalization.
    pub raw_scores: Vec<f64>,
    pub scores: Vec<f64>,
}

/// How far a softmax row may deviate from summing to one.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

impl ForwardTrace {
    /// Verify the structural invariants; returns a description of the
    /// first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let weight_groups = [
            ("aggregation weights", &self.aggregation_weights),
            ("attention rows", &self.attention_rows),
        ];
        for (what, group) in weight_groups {
            for (i, weights) in group.iter().enumerate() {
                check_distribution(weights, &format!("{what}[{i}]"))?;
            }
        }
        if !self.interest_weights.is_empty() {
            check_distribution(&self.interest_weights, "interest weights")?;
        }

        let open_unit = [
            ("message gates", &self.gate_values),
            ("price gate", &self.price_gate),
            ("interest gate", &self.interest_gate),
        ];
        for (what, values) in open_unit {
            for &v in values.iter() {
                if !(v > 0.0 && v < 1.0) {
                    return Err(format!("{what}: {v} outside (0,1)"));
                }
            }
        }

        let bounded = [
            ("product coupling", &self.product_coupling),
            ("sum coupling", &self.sum_coupling),
            ("price mix", &self.price_mix),
            ("interest mix", &self.interest_mix),
        ];
        for (what, values) in bounded {
            for &v in values.iter() {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(format!("{what}: {v} outside [-1,1]"));
                }
            }
        }

        for &v in &self.raw_scores {
            if !v.is_finite() {
                return Err(format!("raw score {v} not finite"));
            }
        }
        if !self.scores.is_empty() {
            check_distribution(&self.scores, "scores")?;
        }
        Ok(())
    }
}

fn check_distribution(weights: &[f64], what: &str) -> Result<(), String> {
    let mut sum = 0.0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(format!("{what}: weight {w} is negative or not finite"));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(format!("{what}: weights sum to {sum}, not 1"));
    }
    Ok(())
}
