//! Next-item scores and the training loss.

use crate::error::NumericError;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::ForwardTrace;

/// Score every catalog item against the session preferences.
///
/// An item's raw score is its interest affinity (`interest_pref` dotted
/// with the item's propagated ID state) plus, when a price preference
/// is present, its price affinity (`price_pref` dotted with the state
/// of the item's price level, looked up through `item_levels`). Raw
/// scores are normalized with a softmax so the result is a probability
/// distribution over the catalog.
pub fn score_items(
    tape: &Tape,
    price_pref: Option<Var>,
    interest_pref: Var,
    price_table: Var,
    id_table: Var,
    item_levels: &[usize],
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Var, NumericError> {
    let mut raw = tape.matmul(interest_pref, tape.transpose(id_table)?)?;
    if let Some(price_pref) = price_pref {
        let level_rows = tape.gather(price_table, item_levels)?;
        let price_part = tape.matmul(price_pref, tape.transpose(level_rows)?)?;
        raw = tape.add(raw, price_part)?;
    }
    let scores = tape.softmax(raw)?;
    if let Some(t) = trace.as_deref_mut() {
        t.raw_scores = tape.value(raw).data().to_vec();
        t.scores = tape.value(scores).data().to_vec();
    }
    Ok(scores)
}

/// Full binary cross-entropy of a normalized score row against a
/// one-hot target: `−log y_t − Σ_{j≠t} log(1 − y_j)`. Logs are clamped
/// (see [`Tape::log`]) so saturated scores cannot produce infinities.
pub fn loss(tape: &Tape, scores: Var, target: usize) -> Result<Var, NumericError> {
    let (rows, n) = tape.shape(scores);
    if rows != 1 {
        return Err(NumericError::ShapeMismatch {
            op: "loss",
            details: format!("expected a single score row, got {rows} rows"),
        });
    }
    if target >= n {
        return Err(NumericError::IndexOutOfBounds { index: target, rows: n });
    }
    let mut hit_mask = Tensor::zeros(1, n);
    hit_mask.set(0, target, 1.0);
    let mut miss_mask = Tensor::ones(1, n);
    miss_mask.set(0, target, 0.0);

    let hit = tape.mul(tape.constant(hit_mask), tape.log(scores)?)?;
    let miss = tape.mul(
        tape.constant(miss_mask),
        tape.log(tape.one_minus(scores)?)?,
    )?;
    tape.scalar_mul(tape.sum(tape.add(hit, miss)?)?, -1.0)
}
