//! The price-aware session recommender network.
//!
//! A forward pass has four stages, each in its own submodule:
//!
//! 1. [`propagate`] (in `aggregate`): message passing over the
//!    heterogeneous hypergraph produces one state table per node type.
//! 2. [`extract_price_preference`] / [`extract_interest_preference`]
//!    (in `preference`): the session's price-level rows and item rows
//!    are compressed into two preference vectors.
//! 3. [`co_guide`]: the preferences refine each other through a gated
//!    cascade.
//! 4. [`score_items`] + [`loss`] (in `scoring`): every catalog item is
//!    scored against the preferences and normalized to probabilities.
//!
//! Parameters live in a [`ParamStore`] under stable dotted names
//! ([`initialize_params`] creates them in a fixed order, so a seed
//! fully determines every value). [`ModelVars::bind`] registers them
//! on a [`Tape`] for one forward/backward pass; [`FrozenModel`] runs
//! propagation once and caches the tables for cheap repeated scoring.

mod aggregate;
mod coguide;
mod preference;
mod scoring;
mod trace;
pub mod train;

pub use aggregate::{inter_type_aggregate, intra_type_aggregate, propagate};
pub use coguide::co_guide;
pub use preference::{extract_interest_preference, extract_price_preference};
pub use scoring::{loss, score_items};
pub use trace::{ForwardTrace, WEIGHT_SUM_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::dataset::ItemCatalog;
use crate::error::{ConfigError, NumericError};
use crate::hypergraph::HeteroHypergraph;
use crate::metrics::rank_descending;
use crate::optim::{seeded_rng, uniform_init, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Position-table length and default session truncation horizon.
pub const DEFAULT_MAX_SESSION_LEN: usize = 19;

/// Switches that disable parts of the network for comparison runs.
/// All parameters are still created and initialized identically, so a
/// seed produces the same starting point under every ablation; the
/// disabled parts simply receive no gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Silence price nodes in propagation and score without the price
    /// preference.
    pub no_price: bool,
    /// Silence category nodes in propagation.
    pub no_category: bool,
    /// Keep price nodes in propagation but score without the price
    /// preference.
    pub price_as_feature_only: bool,
    /// Extract both preferences but skip their mutual refinement and
    /// score with the raw pair.
    pub no_coguide: bool,
}

impl Ablation {
    /// Accepted `--ablation` names.
    pub const NAMES: [&'static str; 5] = [
        "none",
        "no_price",
        "no_category",
        "price_as_feature_only",
        "no_coguide",
    ];

    /// Parse a single-switch name as used by the CLI.
    pub fn from_name(name: &str) -> Result<Self, ConfigError> {
        let mut ablation = Self::default();
        match name {
            "none" => {}
            "no_price" => ablation.no_price = true,
            "no_category" => ablation.no_category = true,
            "price_as_feature_only" => ablation.price_as_feature_only = true,
            "no_coguide" => ablation.no_coguide = true,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown ablation '{other}' (expected one of {:?})",
                    Self::NAMES
                )))
            }
        }
        Ok(ablation)
    }

    /// Whether the score includes the price-preference term.
    pub fn uses_price_preference(&self) -> bool {
        !(self.no_price || self.price_as_feature_only)
    }
}

/// Everything that shapes the network, independent of the catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Width `d` of every embedding and hidden state.
    pub embedding_dim: usize,
    /// Self-attention heads `h`; must divide `embedding_dim`.
    pub heads: usize,
    /// Number of price levels `ρ`; must match the catalog.
    pub price_levels: usize,
    /// Message-passing rounds `r`.
    pub rounds: usize,
    /// Sessions are truncated to their most recent `max_session_len`
    /// items; also the number of position-embedding rows.
    pub max_session_len: usize,
    pub ablation: Ablation,
    /// Normalize interest attention weights with a softmax (the
    /// default); `false` keeps the raw weights, for diagnostics only.
    pub normalize_interest: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            embedding_dim: 128,
            heads: 4,
            price_levels: 10,
            rounds: 2,
            max_session_len: DEFAULT_MAX_SESSION_LEN,
            ablation: Ablation::default(),
            normalize_interest: true,
        }
    }
}

impl Hyperparams {
    /// Check the internal constraints.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive".into());
        }
        if self.heads == 0 {
            return fail("heads must be positive".into());
        }
        if self.embedding_dim % self.heads != 0 {
            return fail(format!(
                "embedding_dim {} is not divisible by heads {}",
                self.embedding_dim, self.heads
            ));
        }
        if self.rounds == 0 {
            return fail("rounds must be at least 1".into());
        }
        if self.price_levels < 2 {
            return fail("price_levels must be at least 2".into());
        }
        if self.max_session_len == 0 {
            return fail("max_session_len must be positive".into());
        }
        Ok(())
    }

    /// Check that the catalog was discretized with the same number of
    /// price levels this model expects.
    pub fn check_against_catalog(&self, catalog: &ItemCatalog) -> Result<(), ConfigError> {
        if self.price_levels != catalog.price_levels {
            return Err(ConfigError::Invalid(format!(
                "price_levels {} does not match the catalog's {}",
                self.price_levels, catalog.price_levels
            )));
        }
        Ok(())
    }
}

/// The three message-passing channels share this shape: one attention
/// vector per neighbor type and three gate matrices.
#[derive(Clone, Copy, Debug)]
pub struct ChannelVars {
    pub attn_first: Var,
    pub attn_second: Var,
    pub gate_joint: Var,
    pub gate_first: Var,
    pub gate_second: Var,
}

/// One self-attention head's projections, each `d/h × d`.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub query: Var,
    pub key: Var,
    pub value: Var,
}

/// Parameters of the interest read-out.
#[derive(Clone, Copy, Debug)]
pub struct InterestVars {
    pub fuse_w: Var,
    pub fuse_b: Var,
    pub attn_own: Var,
    pub attn_mean: Var,
    pub attn_bias: Var,
    pub attn_vector: Var,
}

/// Parameters of the co-guided refinement cascade.
#[derive(Clone, Copy, Debug)]
pub struct CoGuideVars {
    pub product_w: Var,
    pub product_b: Var,
    pub sum_w: Var,
    pub sum_b: Var,
    pub price_gate_w: Var,
    pub price_gate_u: Var,
    pub interest_gate_w: Var,
    pub interest_gate_u: Var,
    pub price_mix_w: Var,
    pub price_mix_u: Var,
    pub interest_mix_w: Var,
    pub interest_mix_u: Var,
}

/// Every model parameter registered on one tape.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub embed_item: Var,
    pub embed_price: Var,
    pub embed_category: Var,
    pub item_channel: ChannelVars,
    pub price_channel: ChannelVars,
    pub category_channel: ChannelVars,
    pub price_heads: Vec<HeadVars>,
    pub positions: Var,
    pub interest: InterestVars,
    pub coguide: CoGuideVars,
}

/// Node tables produced by [`propagate`].
#[derive(Clone, Copy, Debug)]
pub struct NodeStates {
    pub item: Var,
    pub price: Var,
    pub category: Var,
}

/// Channel name and its two neighbor types, in gate order.
const CHANNELS: [(&str, &str, &str); 3] = [
    ("item", "price", "category"),
    ("price", "item", "category"),
    ("category", "price", "item"),
];

/// Create every parameter with the standard `±1/√cols` uniform
/// initialization. Creation order is fixed, so one seed determines
/// every table regardless of ablation switches.
pub fn initialize_params(
    hp: &Hyperparams,
    n_items: usize,
    n_categories: usize,
    seed: u64,
) -> Result<ParamStore, ConfigError> {
    hp.validate()?;
    if n_items == 0 {
        return Err(ConfigError::Invalid("catalog has no items".into()));
    }
    if n_categories == 0 {
        return Err(ConfigError::Invalid("catalog has no categories".into()));
    }
    let d = hp.embedding_dim;
    let head_dim = d / hp.heads;
    let mut rng = seeded_rng(seed);
    let mut store = ParamStore::new();
    let mut push = |store: &mut ParamStore, name: &str, rows: usize, cols: usize| {
        store.insert(name, uniform_init(&mut rng, rows, cols));
    };

    push(&mut store, "embed.item", n_items, d);
    push(&mut store, "embed.price", hp.price_levels, d);
    push(&mut store, "embed.category", n_categories, d);
    for (target, first, second) in CHANNELS {
        push(&mut store, &format!("agg.{target}.attn_{first}"), 1, d);
        push(&mut store, &format!("agg.{target}.attn_{second}"), 1, d);
        push(&mut store, &format!("agg.{target}.gate"), d, 3 * d);
        push(&mut store, &format!("agg.{target}.gate_{first}"), d, d);
        push(&mut store, &format!("agg.{target}.gate_{second}"), d, d);
    }
    for head in 0..hp.heads {
        push(&mut store, &format!("price_attn.head{head}.query"), head_dim, d);
        push(&mut store, &format!("price_attn.head{head}.key"), head_dim, d);
        push(&mut store, &format!("price_attn.head{head}.value"), head_dim, d);
    }
    push(&mut store, "positions", hp.max_session_len, d);
    push(&mut store, "interest.fuse_w", d, 2 * d);
    push(&mut store, "interest.fuse_b", 1, d);
    push(&mut store, "interest.attn_own", d, d);
    push(&mut store, "interest.attn_mean", d, d);
    push(&mut store, "interest.attn_bias", 1, d);
    push(&mut store, "interest.attn_vector", 1, d);
    for name in [
        "coguide.product_w",
        "coguide.product_b",
        "coguide.sum_w",
        "coguide.sum_b",
        "coguide.price_gate_w",
        "coguide.price_gate_u",
        "coguide.interest_gate_w",
        "coguide.interest_gate_u",
        "coguide.price_mix_w",
        "coguide.price_mix_u",
        "coguide.interest_mix_w",
        "coguide.interest_mix_u",
    ] {
        let rows = if name.ends_with("_b") { 1 } else { d };
        push(&mut store, name, rows, d);
    }
    Ok(store)
}

impl ModelVars {
    /// Register every stored parameter on `tape`. With
    /// `trainable: false` the values enter as constants (no gradient
    /// bookkeeping), which is what frozen inference wants.
    pub fn bind(
        tape: &Tape,
        store: &ParamStore,
        hp: &Hyperparams,
        trainable: bool,
    ) -> Result<Self, NumericError> {
        let lookup = |name: &str| -> Result<Var, NumericError> {
            let value = store.get(name)?.clone();
            Ok(if trainable {
                tape.param(name, value)
            } else {
                tape.constant(value)
            })
        };
        let channel = |target: &str, first: &str, second: &str| -> Result<ChannelVars, NumericError> {
            Ok(ChannelVars {
                attn_first: lookup(&format!("agg.{target}.attn_{first}"))?,
                attn_second: lookup(&format!("agg.{target}.attn_{second}"))?,
                gate_joint: lookup(&format!("agg.{target}.gate"))?,
                gate_first: lookup(&format!("agg.{target}.gate_{first}"))?,
                gate_second: lookup(&format!("agg.{target}.gate_{second}"))?,
            })
        };
        let price_heads = (0..hp.heads)
            .map(|head| {
                Ok(HeadVars {
                    query: lookup(&format!("price_attn.head{head}.query"))?,
                    key: lookup(&format!("price_attn.head{head}.key"))?,
                    value: lookup(&format!("price_attn.head{head}.value"))?,
                })
            })
            .collect::<Result<Vec<_>, NumericError>>()?;
        Ok(Self {
            embed_item: lookup("embed.item")?,
            embed_price: lookup("embed.price")?,
            embed_category: lookup("embed.category")?,
            item_channel: channel("item", "price", "category")?,
            price_channel: channel("price", "item", "category")?,
            category_channel: channel("category", "price", "item")?,
            price_heads,
            positions: lookup("positions")?,
            interest: InterestVars {
                fuse_w: lookup("interest.fuse_w")?,
                fuse_b: lookup("interest.fuse_b")?,
                attn_own: lookup("interest.attn_own")?,
                attn_mean: lookup("interest.attn_mean")?,
                attn_bias: lookup("interest.attn_bias")?,
                attn_vector: lookup("interest.attn_vector")?,
            },
            coguide: CoGuideVars {
                product_w: lookup("coguide.product_w")?,
                product_b: lookup("coguide.product_b")?,
                sum_w: lookup("coguide.sum_w")?,
                sum_b: lookup("coguide.sum_b")?,
                price_gate_w: lookup("coguide.price_gate_w")?,
                price_gate_u: lookup("coguide.price_gate_u")?,
                interest_gate_w: lookup("coguide.interest_gate_w")?,
                interest_gate_u: lookup("coguide.interest_gate_u")?,
                price_mix_w: lookup("coguide.price_mix_w")?,
                price_mix_u: lookup("coguide.price_mix_u")?,
                interest_mix_w: lookup("coguide.interest_mix_w")?,
                interest_mix_u: lookup("coguide.interest_mix_u")?,
            },
        })
    }
}

/// Score one session against the whole catalog using already-computed
/// node tables. The input is truncated to its most recent
/// `max_session_len` items; the returned row sums to 1 over items.
pub fn forward_session(
    tape: &Tape,
    vars: &ModelVars,
    states: &NodeStates,
    hp: &Hyperparams,
    item_levels: &[usize],
    session_input: &[usize],
    mut trace: Option<&mut ForwardTrace>,
) -> Result<Var, NumericError> {
    if session_input.is_empty() {
        return Err(NumericError::EmptyInput {
            op: "session forward",
        });
    }
    let skip = session_input.len().saturating_sub(hp.max_session_len);
    let items = &session_input[skip..];

    let id_rows = tape.gather(states.item, items)?;
    let interest = extract_interest_preference(
        tape,
        id_rows,
        vars.positions,
        &vars.interest,
        hp.normalize_interest,
        trace.as_deref_mut(),
    )?;

    let (price_pref, interest_pref) = if hp.ablation.uses_price_preference() {
        let session_levels: Vec<usize> = items.iter().map(|&i| item_levels[i]).collect();
        let price_rows = tape.gather(states.price, &session_levels)?;
        let price = extract_price_preference(
            tape,
            price_rows,
            &vars.price_heads,
            trace.as_deref_mut(),
        )?;
        if hp.ablation.no_coguide {
            (Some(price), interest)
        } else {
            let (fused_price, fused_interest) =
                co_guide(tape, price, interest, &vars.coguide, trace.as_deref_mut())?;
            (Some(fused_price), fused_interest)
        }
    } else {
        (None, interest)
    };

    score_items(
        tape,
        price_pref,
        interest_pref,
        states.price,
        states.item,
        item_levels,
        trace,
    )
}

/// Propagation output captured as plain tensors, for repeated
/// inference without re-running message passing.
#[derive(Clone, Debug)]
pub struct FrozenModel {
    pub hp: Hyperparams,
    pub item_states: Tensor,
    pub price_states: Tensor,
    pub category_states: Tensor,
    pub item_levels: Vec<usize>,
    params: ParamStore,
}

impl FrozenModel {
    /// Run propagation once over `graph` and cache the node tables.
    pub fn freeze(
        store: &ParamStore,
        graph: &HeteroHypergraph,
        hp: &Hyperparams,
    ) -> Result<Self, NumericError> {
        let tape = Tape::new();
        let vars = ModelVars::bind(&tape, store, hp, false)?;
        let states = propagate(&tape, graph, &vars, hp, None)?;
        Ok(Self {
            hp: hp.clone(),
            item_states: tape.value(states.item),
            price_states: tape.value(states.price),
            category_states: tape.value(states.category),
            item_levels: graph.item_levels().to_vec(),
            params: store.clone(),
        })
    }

    /// Normalized catalog scores for one session input.
    pub fn score_session(
        &self,
        session_input: &[usize],
        trace: Option<&mut ForwardTrace>,
    ) -> Result<Vec<f64>, NumericError> {
        let tape = Tape::new();
        let vars = ModelVars::bind(&tape, &self.params, &self.hp, false)?;
        let states = NodeStates {
            item: tape.constant(self.item_states.clone()),
            price: tape.constant(self.price_states.clone()),
            category: tape.constant(self.category_states.clone()),
        };
        let scores = forward_session(
            &tape,
            &vars,
            &states,
            &self.hp,
            &self.item_levels,
            session_input,
            trace,
        )?;
        Ok(tape.value(scores).data().to_vec())
    }

    /// Top-`k` item indices by score, descending; equal scores rank
    /// the lower index first; `k` larger than the catalog is clamped.
    pub fn predict_topk(
        &self,
        session_input: &[usize],
        k: usize,
    ) -> Result<Vec<usize>, NumericError> {
        let scores = self.score_session(session_input, None)?;
        Ok(rank_descending(&scores, k))
    }
}
