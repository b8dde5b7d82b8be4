//! The heterogeneous hypergraph over price-level, item, and category
//! nodes.
//!
//! Three hyperedge families exist:
//!
//! - a **feature** edge per item, joining the item node to its price
//!   level and its category;
//! - a **price** edge per training session, joining the distinct price
//!   levels browsed in that session;
//! - a **session** edge per training session, joining the distinct
//!   items of that session.
//!
//! Aggregation walks *feature* edges for every cross-type neighbor set
//! and *session* edges for item→item neighbors. Price edges never feed
//! aggregation — the preference extractor consumes the session's price
//! sequence positionally instead — so price→price and
//! category→category queries return the empty set.
//!
//! The graph is built from training sessions only; validation and test
//! sessions contribute no edges.

use std::collections::BTreeSet;

use crate::dataset::{ItemCatalog, Session};
use crate::error::DataError;

/// The three node families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeType {
    Price,
    ItemId,
    Category,
}

/// A node: its family plus the index within that family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRef {
    pub node_type: NodeType,
    pub index: usize,
}

impl NodeRef {
    pub fn price(index: usize) -> Self {
        Self {
            node_type: NodeType::Price,
            index,
        }
    }

    pub fn item(index: usize) -> Self {
        Self {
            node_type: NodeType::ItemId,
            index,
        }
    }

    pub fn category(index: usize) -> Self {
        Self {
            node_type: NodeType::Category,
            index,
        }
    }
}

/// Immutable typed-adjacency structure; see the module docs.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroHypergraph {
    price_nodes: usize,
    item_nodes: usize,
    category_nodes: usize,
    /// Deduplicated distinct-level sets, one per surviving session.
    price_edges: Vec<Vec<usize>>,
    /// Deduplicated distinct-item sets, one per surviving session.
    session_edges: Vec<Vec<usize>>,
    // Typed adjacency. Item→price and item→category are singletons by
    // construction (one feature edge per item) but stored uniformly.
    item_to_price: Vec<usize>,
    item_to_category: Vec<usize>,
    item_to_item: Vec<Vec<usize>>,
    price_to_item: Vec<Vec<usize>>,
    price_to_category: Vec<Vec<usize>>,
    category_to_item: Vec<Vec<usize>>,
    category_to_price: Vec<Vec<usize>>,
    empty: Vec<usize>,
}

impl HeteroHypergraph {
    /// Construct the graph from the catalog's feature edges plus one
    /// price edge and one session edge per training session. Member
    /// sets are deduplicated; sets with fewer than two distinct
    /// members, and duplicate sets, are dropped.
    pub fn build(
        catalog: &ItemCatalog,
        train_sessions: &[Session],
    ) -> Result<Self, DataError> {
        let n = catalog.len();
        let price_nodes = catalog.price_levels.max(1);
        let category_nodes = catalog.categories.len();

        let mut price_edge_set: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut session_edge_set: BTreeSet<Vec<usize>> = BTreeSet::new();
        for session in train_sessions {
            let mut items: Vec<usize> = session.items.clone();
            for &i in &items {
                if i >= n {
                    return Err(DataError::UnknownItemIndex(i));
                }
            }
            items.sort_unstable();
            items.dedup();
            let mut levels: Vec<usize> =
                items.iter().map(|&i| catalog.price_level_of(i)).collect();
            levels.sort_unstable();
            levels.dedup();
            if items.len() >= 2 {
                session_edge_set.insert(items);
            }
            if levels.len() >= 2 {
                price_edge_set.insert(levels);
            }
        }

        let mut g = Self {
            price_nodes,
            item_nodes: n,
            category_nodes,
            price_edges: price_edge_set.into_iter().collect(),
            session_edges: session_edge_set.into_iter().collect(),
            item_to_price: Vec::with_capacity(n),
            item_to_category: Vec::with_capacity(n),
            item_to_item: vec![Vec::new(); n],
            price_to_item: vec![Vec::new(); price_nodes],
            price_to_category: vec![Vec::new(); price_nodes],
            category_to_item: vec![Vec::new(); category_nodes],
            category_to_price: vec![Vec::new(); category_nodes],
            empty: Vec::new(),
        };

        // Feature edges drive every cross-type neighbor set.
        for (i, item) in catalog.items.iter().enumerate() {
            let (level, cat) = (item.price_level, item.category);
            g.item_to_price.push(level);
            g.item_to_category.push(cat);
            g.price_to_item[level].push(i);
            g.price_to_category[level].push(cat);
            g.category_to_item[cat].push(i);
            g.category_to_price[cat].push(level);
        }
        // Session edges drive item→item neighbors, self excluded.
        for edge in &g.session_edges {
            for &i in edge {
                g.item_to_item[i].extend(edge.iter().filter(|&&j| j != i));
            }
        }
        for list in g
            .item_to_item
            .iter_mut()
            .chain(&mut g.price_to_item)
            .chain(&mut g.price_to_category)
            .chain(&mut g.category_to_item)
            .chain(&mut g.category_to_price)
        {
            list.sort_unstable();
            list.dedup();
        }
        Ok(g)
    }

    /// Neighbors of `node` that have `target` type, as sorted indices
    /// within that type. Queries outside the schema (price→price,
    /// category→category) return an empty slice.
    pub fn neighbors(&self, node: NodeRef, target: NodeType) -> &[usize] {
        use NodeType::*;
        match (node.node_type, target) {
            (ItemId, Price) => std::slice::from_ref(&self.item_to_price[node.index]),
            (ItemId, Category) => std::slice::from_ref(&self.item_to_category[node.index]),
            (ItemId, ItemId) => &self.item_to_item[node.index],
            (Price, ItemId) => &self.price_to_item[node.index],
            (Price, Category) => &self.price_to_category[node.index],
            (Category, ItemId) => &self.category_to_item[node.index],
            (Category, Price) => &self.category_to_price[node.index],
            (Price, Price) | (Category, Category) => &self.empty,
        }
    }

    pub fn node_count(&self, node_type: NodeType) -> usize {
        match node_type {
            NodeType::Price => self.price_nodes,
            NodeType::ItemId => self.item_nodes,
            NodeType::Category => self.category_nodes,
        }
    }

    /// Number of feature edges (one per item).
    pub fn feature_edge_count(&self) -> usize {
        self.item_nodes
    }

    /// Price level of every item, in item-index order.
    pub fn item_levels(&self) -> &[usize] {
        &self.item_to_price
    }

    /// Category of every item, in item-index order.
    pub fn item_categories(&self) -> &[usize] {
        &self.item_to_category
    }

    pub fn price_edges(&self) -> &[Vec<usize>] {
        &self.price_edges
    }

    pub fn session_edges(&self) -> &[Vec<usize>] {
        &self.session_edges
    }

    /// Node counts and edge lists, for fixture inspection.
    pub fn debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "nodes": {
                "price": self.price_nodes,
                "item": self.item_nodes,
                "category": self.category_nodes,
            },
            "feature_edges": (0..self.item_nodes)
                .map(|i| serde_json::json!({
                    "item": i,
                    "price": self.item_to_price[i],
                    "category": self.item_to_category[i],
                }))
                .collect::<Vec<_>>(),
            "price_edges": self.price_edges,
            "session_edges": self.session_edges,
        })
    }
}
