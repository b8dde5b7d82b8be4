//! Message passing over the heterogeneous hypergraph.
//!
//! Each round updates all three node tables *synchronously* from the
//! previous round's values, with parameters shared across rounds:
//!
//! - every node first summarizes each neighbor type with a small
//!   attention ([`intra_type_aggregate`]),
//! - then fuses the two summaries into its own state through a
//!   learned gate ([`inter_type_aggregate`]),
//! - and item nodes additionally add the average of their session
//!   co-members.

use crate::error::NumericError;
use crate::hypergraph::{HeteroHypergraph, NodeRef, NodeType};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::{ForwardTrace, Hyperparams, ModelVars, NodeStates};

/// Attention-weighted summary of `neighbors` rows of `table`:
/// weights are a softmax over `attn · row`, the result their convex
/// combination. An empty neighbor set summarizes to the zero vector.
pub fn intra_type_aggregate(
    tape: &Tape,
    table: Var,
    neighbors: &[usize],
    attn: Var,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Var, NumericError> {
    let (_, d) = tape.shape(table);
    if neighbors.is_empty() {
        return Ok(tape.constant(Tensor::zeros(1, d)));
    }
    let rows = tape.gather(table, neighbors)?;
    let scores = tape.transpose(tape.matmul(rows, tape.transpose(attn)?)?)?;
    let weights = tape.softmax(scores)?;
    if let Some(t) = trace.as_deref_mut() {
        t.aggregation_weights.push(tape.value(weights).data().to_vec());
    }
    tape.matmul(weights, rows)
}

/// Gated fusion of a node's own state with its two neighbor-type
/// summaries, batched over rows: the gate
/// `g = σ(W[own; first; second] + W₁·first + W₂·second)` blends the
/// summaries, and the result is `own + g∘first + (1−g)∘second`.
pub fn inter_type_aggregate(
    tape: &Tape,
    own: Var,
    first: Var,
    second: Var,
    gate_joint: Var,
    gate_first: Var,
    gate_second: Var,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Var, NumericError> {
    let joint = tape.concat_cols(&[own, first, second])?;
    let pre = tape.add(
        tape.add(
            tape.matmul(joint, tape.transpose(gate_joint)?)?,
            tape.matmul(first, tape.transpose(gate_first)?)?,
        )?,
        tape.matmul(second, tape.transpose(gate_second)?)?,
    )?;
    let gate = tape.sigmoid(pre)?;
    if let Some(t) = trace.as_deref_mut() {
        t.gate_values.extend_from_slice(tape.value(gate).data());
    }
    let kept = tape.mul(gate, first)?;
    let complement = tape.mul(tape.one_minus(gate)?, second)?;
    tape.add(tape.add(own, kept)?, complement)
}

/// Run `hp.rounds` rounds of message passing starting from the
/// embedding tables, and return the final node tables. Ablations can
/// silence the price or category channel: the silenced type's table is
/// left at its embeddings and its summaries enter every gate as zero.
pub fn propagate(
    tape: &Tape,
    graph: &HeteroHypergraph,
    vars: &ModelVars,
    hp: &Hyperparams,
    mut trace: Option<&mut ForwardTrace>,
) -> Result<NodeStates, NumericError> {
    let n = graph.node_count(NodeType::ItemId);
    let n_price = graph.node_count(NodeType::Price);
    let n_cat = graph.node_count(NodeType::Category);
    let d = tape.shape(vars.embed_item).1;
    let use_price = !hp.ablation.no_price;
    let use_category = !hp.ablation.no_category;

    // Per-item singleton feature neighbors.
    let levels: Vec<usize> = (0..n)
        .map(|i| graph.neighbors(NodeRef::item(i), NodeType::Price)[0])
        .collect();
    let cats: Vec<usize> = (0..n)
        .map(|i| graph.neighbors(NodeRef::item(i), NodeType::Category)[0])
        .collect();

    // The co-member average is a fixed linear map of the item table:
    // row i holds 1/deg at i's neighbors. Kept as one sparse constant
    // so each round costs a single matmul.
    let mut averaging = Tensor::zeros(n, n);
    for i in 0..n {
        let neighbors = graph.neighbors(NodeRef::item(i), NodeType::ItemId);
        for &j in neighbors {
            averaging.set(i, j, 1.0 / neighbors.len() as f64);
        }
    }
    let averaging = tape.constant(averaging);

    let zero_rows = |rows: usize| tape.constant(Tensor::zeros(rows, d));

    let mut item_table = vars.embed_item;
    let mut price_table = vars.embed_price;
    let mut cat_table = vars.embed_category;

    for _ in 0..hp.rounds {
        let (prev_item, prev_price, prev_cat) = (item_table, price_table, cat_table);

        // Item channel. Price/category neighbors are singletons, so
        // their attention summary is exactly the neighbor row.
        let price_summary = if use_price {
            tape.gather(prev_price, &levels)?
        } else {
            zero_rows(n)
        };
        let cat_summary = if use_category {
            tape.gather(prev_cat, &cats)?
        } else {
            zero_rows(n)
        };
        let fused = inter_type_aggregate(
            tape,
            prev_item,
            price_summary,
            cat_summary,
            vars.item_channel.gate_joint,
            vars.item_channel.gate_first,
            vars.item_channel.gate_second,
            trace.as_deref_mut(),
        )?;
        item_table = tape.add(fused, tape.matmul(averaging, prev_item)?)?;

        if use_price {
            let mut item_parts = Vec::with_capacity(n_price);
            let mut cat_parts = Vec::with_capacity(n_price);
            for level in 0..n_price {
                let node = NodeRef::price(level);
                item_parts.push(intra_type_aggregate(
                    tape,
                    prev_item,
                    graph.neighbors(node, NodeType::ItemId),
                    vars.price_channel.attn_first,
                    trace.as_deref_mut(),
                )?);
                cat_parts.push(if use_category {
                    intra_type_aggregate(
                        tape,
                        prev_cat,
                        graph.neighbors(node, NodeType::Category),
                        vars.price_channel.attn_second,
                        trace.as_deref_mut(),
                    )?
                } else {
                    zero_rows(1)
                });
            }
            price_table = inter_type_aggregate(
                tape,
                prev_price,
                tape.concat_rows(&item_parts)?,
                tape.concat_rows(&cat_parts)?,
                vars.price_channel.gate_joint,
                vars.price_channel.gate_first,
                vars.price_channel.gate_second,
                trace.as_deref_mut(),
            )?;
        }

        if use_category {
            let mut price_parts = Vec::with_capacity(n_cat);
            let mut item_parts = Vec::with_capacity(n_cat);
            for cat in 0..n_cat {
                let node = NodeRef::category(cat);
                price_parts.push(if use_price {
                    intra_type_aggregate(
                        tape,
                        prev_price,
                        graph.neighbors(node, NodeType::Price),
                        vars.category_channel.attn_first,
                        trace.as_deref_mut(),
                    )?
                } else {
                    zero_rows(1)
                });
                item_parts.push(intra_type_aggregate(
                    tape,
                    prev_item,
                    graph.neighbors(node, NodeType::ItemId),
                    vars.category_channel.attn_second,
                    trace.as_deref_mut(),
                )?);
            }
            cat_table = inter_type_aggregate(
                tape,
                prev_cat,
                tape.concat_rows(&price_parts)?,
                tape.concat_rows(&item_parts)?,
                vars.category_channel.gate_joint,
                vars.category_channel.gate_first,
                vars.category_channel.gate_second,
                trace.as_deref_mut(),
            )?;
        }
    }

    if let Some(t) = trace.as_deref_mut() {
        t.item_states = Some(tape.value(item_table));
        t.price_states = Some(tape.value(price_table));
        t.category_states = Some(tape.value(cat_table));
    }
    Ok(NodeStates {
        item: item_table,
        price: price_table,
        category: cat_table,
    })
}
