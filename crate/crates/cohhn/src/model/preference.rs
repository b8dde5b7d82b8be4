//! Session read-outs: price preference and interest preference.
//!
//! Both take the per-position states of one session (price-level rows
//! for the former, item-ID rows for the latter) and compress them into
//! a single `1×d` preference vector.

use crate::error::NumericError;
use crate::tape::{Tape, Var};

use super::{ForwardTrace, HeadVars, InterestVars};

/// Multi-head self-attention over the session's price-level rows,
/// read out at the last position.
///
/// Each head projects the rows to queries, keys, and values of width
/// `d / heads`, applies scaled dot-product attention, and the head
/// outputs are concatenated back to width `d`. The returned row is
/// the final session position's, i.e. the state most informed by the
/// whole sequence.
pub fn extract_price_preference(
    tape: &Tape,
    price_rows: Var,
    heads: &[HeadVars],
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Var, NumericError> {
    let (m, _) = tape.shape(price_rows);
    let mut head_outputs = Vec::with_capacity(heads.len());
    for head in heads {
        let q = tape.matmul(price_rows, tape.transpose(head.query)?)?;
        let k = tape.matmul(price_rows, tape.transpose(head.key)?)?;
        let v = tape.matmul(price_rows, tape.transpose(head.value)?)?;
        let head_width = tape.shape(q).1;
        let scale = 1.0 / (head_width as f64).sqrt();
        let scores = tape.scalar_mul(tape.matmul(q, tape.transpose(k)?)?, scale)?;
        let attention = tape.softmax(scores)?;
        if let Some(t) = trace.as_deref_mut() {
            for row in tape.value(attention).data().chunks(m) {
                t.attention_rows.push(row.to_vec());
            }
        }
        head_outputs.push(tape.matmul(attention, v)?);
    }
    let stacked = tape.concat_cols(&head_outputs)?;
    let pref = tape.gather(stacked, &[m - 1])?;
    if let Some(t) = trace.as_deref_mut() {
        t.price_pref_raw = tape.value(pref).data().to_vec();
    }
    Ok(pref)
}

/// Position-aware attention over the session's item-ID rows.
///
/// Each row is fused with a *reversed* position embedding (the last
/// item gets position row 0) through a tanh layer; an attention score
/// per position is computed from the fused row and the fused rows'
/// mean, normalized with a softmax, and used to combine the *raw*
/// item-ID rows. `normalize: false` skips the softmax and uses the
/// raw scores as weights (a diagnostic variant; the trace records
/// weights only on the normalized path, where they form a
/// distribution).
pub fn extract_interest_preference(
    tape: &Tape,
    id_rows: Var,
    positions: Var,
    vars: &InterestVars,
    normalize: bool,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Var, NumericError> {
    let (m, _) = tape.shape(id_rows);
    let reversed: Vec<usize> = (0..m).rev().collect();
    let pos_rows = tape.gather(positions, &reversed)?;

    let joint = tape.concat_cols(&[id_rows, pos_rows])?;
    let fused = tape.tanh(tape.add_row(
        tape.matmul(joint, tape.transpose(vars.fuse_w)?)?,
        vars.fuse_b,
    )?)?;
    let mean = tape.mean_rows(fused)?;

    let shared = tape.add(tape.matmul(mean, tape.transpose(vars.attn_mean)?)?, vars.attn_bias)?;
    let pre = tape.add_row(tape.matmul(fused, tape.transpose(vars.attn_own)?)?, shared)?;
    let scores = tape.transpose(tape.matmul(
        tape.sigmoid(pre)?,
        tape.transpose(vars.attn_vector)?,
    )?)?;
    let weights = if normalize { tape.softmax(scores)? } else { scores };
    if let Some(t) = trace.as_deref_mut() {
        if normalize {
            t.interest_weights = tape.value(weights).data().to_vec();
        }
    }

    let pref = tape.matmul(weights, id_rows)?;
    if let Some(t) = trace.as_deref_mut() {
        t.interest_pref_raw = tape.value(pref).data().to_vec();
    }
    Ok(pref)
}
