//! Shared fixtures for the integration suites: a synthetic catalog
//! whose labels follow price levels, the small hand-set forward
//! fixture, and plain-float helpers for measuring loss and accuracy
//! outside the graph engine.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use cohhn::dataset::{CatalogItem, ItemCatalog, Session};
use cohhn::hypergraph::HeteroHypergraph;
use cohhn::model::{initialize_params, FrozenModel, Hyperparams};
use cohhn::optim::ParamStore;
use cohhn::tape::LOG_EPS;

pub const PLANTED_ITEMS: usize = 20;
pub const PLANTED_LEVELS: usize = 5;
pub const PLANTED_CATEGORIES: usize = 4;

/// Catalog of 20 items in 4 price-level groups of 4, with categories
/// assigned round-robin so they carry no price information.
pub fn planted_catalog() -> ItemCatalog {
    let items = (0..PLANTED_ITEMS)
        .map(|i| CatalogItem {
            item_id: format!("item-{i:02}"),
            category: i % PLANTED_CATEGORIES,
            price: 10.0 + 5.0 * (i / PLANTED_CATEGORIES) as f64 + 0.25 * (i % 4) as f64,
            price_level: i / PLANTED_CATEGORIES,
        })
        .collect();
    ItemCatalog {
        items,
        categories: (0..PLANTED_CATEGORIES).map(|c| format!("cat-{c}")).collect(),
        price_levels: PLANTED_LEVELS,
        stats: BTreeMap::new(),
    }
}

/// Sessions whose label is drawn from a latent price level `ℓ`. Each
/// input item comes from `ℓ` with probability `1 − noise` and from a
/// *different* level otherwise, so `ℓ` is the clear majority level of
/// the input but no single position gives it away. Lengths are 5–7
/// input items plus the label.
pub fn planted_sessions(count: usize, noise: f64, seed: u64) -> Vec<Session> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let per_level = PLANTED_ITEMS / PLANTED_LEVELS;
    let within = |rng: &mut ChaCha20Rng, level: usize| {
        level * per_level + rng.gen_range(0..per_level)
    };
    (0..count)
        .map(|_| {
            let level = rng.gen_range(0..PLANTED_LEVELS);
            let input_len = rng.gen_range(5..=7);
            let mut items = Vec::with_capacity(input_len + 1);
            for _ in 0..input_len {
                if rng.gen::<f64>() < noise {
                    let shift = rng.gen_range(1..PLANTED_LEVELS);
                    let other = (level + shift) % PLANTED_LEVELS;
                    items.push(within(&mut rng, other));
                } else {
                    items.push(within(&mut rng, level));
                }
            }
            let label = within(&mut rng, level);
            items.push(label);
            Session::new(items)
        })
        .collect()
}

/// Average full binary cross-entropy of frozen scores over sessions,
/// computed with plain floats (same log clamp as the graph engine).
pub fn mean_session_loss(model: &FrozenModel, sessions: &[Session]) -> f64 {
    let mut total = 0.0;
    for session in sessions {
        let scores = model.score_session(session.input(), None).unwrap();
        let target = session.label();
        let mut loss = -scores[target].max(LOG_EPS).ln();
        for (j, &y) in scores.iter().enumerate() {
            if j != target {
                loss -= (1.0 - y).max(LOG_EPS).ln();
            }
        }
        total += loss;
    }
    total / sessions.len() as f64
}

/// Fraction of sessions whose label is the single top-ranked item.
pub fn top1_accuracy(model: &FrozenModel, sessions: &[Session]) -> f64 {
    let hits = sessions
        .iter()
        .filter(|s| model.predict_topk(s.input(), 1).unwrap()[0] == s.label())
        .count();
    hits as f64 / sessions.len() as f64
}

/// Fraction of sessions whose label appears in the top `k`.
pub fn topk_accuracy(model: &FrozenModel, sessions: &[Session], k: usize) -> f64 {
    let hits = sessions
        .iter()
        .filter(|s| model.predict_topk(s.input(), k).unwrap().contains(&s.label()))
        .count();
    hits as f64 / sessions.len() as f64
}

// ---- the two-item hand-set fixture ----

/// Deterministic hand-set parameter pattern; `t` is the tensor's
/// position in the creation order of the store.
pub fn pattern_value(t: usize, i: usize, j: usize) -> f64 {
    (((t * 31 + i * 17 + j * 7) % 23) as f64 - 11.0) / 20.0
}

/// Creation-order names for the manual fixture's parameters
/// (d=2, one attention head).
pub const MANUAL_FIXTURE_NAMES: [&str; 40] = [
    "embed.item",
    "embed.price",
    "embed.category",
    "agg.item.attn_price",
    "agg.item.attn_category",
    "agg.item.gate",
    "agg.item.gate_price",
    "agg.item.gate_category",
    "agg.price.attn_item",
    "agg.price.attn_category",
    "agg.price.gate",
    "agg.price.gate_item",
    "agg.price.gate_category",
    "agg.category.attn_price",
    "agg.category.attn_item",
    "agg.category.gate",
    "agg.category.gate_price",
    "agg.category.gate_item",
    "price_attn.head0.query",
    "price_attn.head0.key",
    "price_attn.head0.value",
    "positions",
    "interest.fuse_w",
    "interest.fuse_b",
    "interest.attn_own",
    "interest.attn_mean",
    "interest.attn_bias",
    "interest.attn_vector",
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
];

pub fn manual_fixture_hyperparams() -> Hyperparams {
    Hyperparams {
        embedding_dim: 2,
        heads: 1,
        price_levels: 2,
        rounds: 1,
        max_session_len: 3,
        ..Hyperparams::default()
    }
}

/// Two items, one category, two price levels; item 0 is the cheap one.
pub fn manual_fixture_catalog() -> ItemCatalog {
    ItemCatalog {
        items: vec![
            CatalogItem {
                item_id: "a".into(),
                category: 0,
                price: 1.0,
                price_level: 0,
            },
            CatalogItem {
                item_id: "b".into(),
                category: 0,
                price: 2.0,
                price_level: 1,
            },
        ],
        categories: vec!["only".into()],
        price_levels: 2,
        stats: BTreeMap::new(),
    }
}

/// The fixture's parameter store: real initializer shapes, values
/// overwritten with [`pattern_value`].
pub fn manual_fixture_store() -> ParamStore {
    let hp = manual_fixture_hyperparams();
    let mut store = initialize_params(&hp, 2, 1, 0).unwrap();
    for (t, name) in MANUAL_FIXTURE_NAMES.iter().enumerate() {
        let shape = store.get(name).unwrap();
        let (rows, cols) = (shape.rows(), shape.cols());
        let mut tensor = cohhn::tensor::Tensor::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                tensor.set(i, j, pattern_value(t, i, j));
            }
        }
        store.set(name, tensor).unwrap();
    }
    store
}

pub fn manual_fixture_graph() -> HeteroHypergraph {
    HeteroHypergraph::build(&manual_fixture_catalog(), &[Session::new(vec![0, 1])]).unwrap()
}
