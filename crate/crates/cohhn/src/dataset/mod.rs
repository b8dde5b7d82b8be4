//! Raw-log ingestion and dataset preparation.
//!
//! The pipeline runs in five steps, each a pure function:
//!
//! 1. [`load_interactions`]: CSV → flat list of [`Interaction`]s,
//!    sorted by `(session_key, timestamp)`.
//! 2. [`sessionize_daily`]: split each key's run of events at UTC
//!    calendar-day boundaries.
//! 3. [`filter_and_index`]: iteratively drop rare items and short
//!    sessions, then index the survivors contiguously.
//! 4. [`assign_price_levels`]: fit per-category logistic price stats
//!    and discretize every item's price into one of `ρ` levels.
//! 5. [`split_chronological`]: 70/20/10 train/validation/test by
//!    session start time.
//!
//! [`save_dataset`] / [`load_dataset`] move the result to and from a
//! directory of `catalog.json` + three `.jsonl` session files.

mod filter;
mod io;
mod load;
mod price;
mod sessionize;
mod split;

pub use filter::filter_and_index;
pub use io::{load_dataset, save_dataset};
pub use load::{load_interactions, ColumnMap};
pub use price::{
    assign_price_levels, discretize_price, discretize_price_uniform, fit_price_stats,
    logistic_cdf, PriceMode, PriceStats,
};
pub use sessionize::sessionize_daily;
pub use split::split_chronological;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One row of the interaction log.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub session_key: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub item_id: String,
    pub price: f64,
    pub category: String,
}

/// A contiguous same-day run of one key's interactions, before
/// filtering and indexing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSession {
    pub session_key: String,
    /// Timestamp of the first event.
    pub start: i64,
    pub events: Vec<Interaction>,
}

/// A filtered session whose events are catalog indices. Retains its
/// key and start time so it can still be ordered chronologically.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedSession {
    pub session_key: String,
    pub start: i64,
    pub items: Vec<usize>,
}

/// A training/evaluation session: at least two catalog indices. The
/// last item is the prediction target, the rest are the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Session {
    pub items: Vec<usize>,
}

impl Session {
    pub fn new(items: Vec<usize>) -> Self {
        debug_assert!(items.len() >= 2, "sessions must keep >= 2 items");
        Self { items }
    }

    /// Everything before the held-out last item.
    pub fn input(&self) -> &[usize] {
        &self.items[..self.items.len() - 1]
    }

    /// The held-out last item.
    pub fn label(&self) -> usize {
        *self.items.last().expect("sessions are non-empty")
    }

    /// The most recent `max_len` input items.
    pub fn truncated_input(&self, max_len: usize) -> &[usize] {
        let input = self.input();
        let skip = input.len().saturating_sub(max_len);
        &input[skip..]
    }
}

/// Chronological 70/20/10 partition of the sessions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<Session>,
    pub valid: Vec<Session>,
    pub test: Vec<Session>,
}

/// One retained item with its derived price level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub item_id: String,
    /// Index into [`ItemCatalog::categories`].
    pub category: usize,
    /// Last observed raw price.
    pub price: f64,
    /// Discretized level in `[0, price_levels)`.
    pub price_level: usize,
}

/// All retained items, indexed contiguously, plus the category table
/// and fitted price statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemCatalog {
    pub items: Vec<CatalogItem>,
    /// Category names; `CatalogItem::category` indexes this.
    pub categories: Vec<String>,
    /// Number of price levels `ρ` used for discretization (0 before
    /// [`assign_price_levels`] runs).
    pub price_levels: usize,
    /// Per-category price statistics, keyed by category name.
    pub stats: BTreeMap<String, PriceStats>,
}

impl ItemCatalog {
    /// Number of items `n`.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Index of an item id, if retained.
    pub fn index_of(&self, item_id: &str) -> Option<usize> {
        // Items are stored sorted by id, so a binary search suffices.
        self.items
            .binary_search_by(|it| it.item_id.as_str().cmp(item_id))
            .ok()
    }

    /// Price level of every item, in index order.
    pub fn price_level_of(&self, index: usize) -> usize {
        self.items[index].price_level
    }

    /// Category index of every item, in index order.
    pub fn category_of(&self, index: usize) -> usize {
        self.items[index].category
    }
}
