//! Non-neural reference recommenders: session popularity (S-POP) and
//! session-based k-nearest-neighbors (SKNN).
//!
//! Both are deterministic and cheap, which makes them useful sanity
//! anchors next to the trained network: a model that cannot beat them
//! on a dataset with real sequential structure is broken.

use std::collections::BTreeMap;

use crate::dataset::Session;
use crate::error::Error;
use crate::metrics::{rank_descending, Recommender};

/// Default neighborhood size for [`Sknn`].
pub const DEFAULT_K_NEIGHBORS: usize = 500;

/// Global item frequencies across the training sessions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopIndex {
    counts: Vec<usize>,
    total: usize,
}

impl PopIndex {
    /// Count every occurrence (labels included) over `train`.
    pub fn build(train: &[Session], n_items: usize) -> Self {
        let mut counts = vec![0usize; n_items];
        let mut total = 0;
        for session in train {
            for &item in &session.items {
                counts[item] += 1;
                total += 1;
            }
        }
        Self { counts, total }
    }

    pub fn count(&self, item: usize) -> usize {
        self.counts[item]
    }

    /// Total interactions counted; equals the train event count.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn n_items(&self) -> usize {
        self.counts.len()
    }
}

/// Rank the session's own items by in-session frequency, then pad
/// with globally popular unseen items.
///
/// Ordering within the session: occurrence count descending, then
/// global popularity descending, then item index. Padding: global
/// popularity descending, then item index. The result has
/// `min(k, catalog size)` distinct items.
pub fn spop_rank(session_input: &[usize], pop: &PopIndex, k: usize) -> Vec<usize> {
    let k = k.min(pop.n_items());
    let mut in_session: BTreeMap<usize, usize> = BTreeMap::new();
    for &item in session_input {
        *in_session.entry(item).or_insert(0) += 1;
    }

    let mut ranked: Vec<usize> = in_session.keys().copied().collect();
    ranked.sort_by(|&a, &b| {
        in_session[&b]
            .cmp(&in_session[&a])
            .then(pop.count(b).cmp(&pop.count(a)))
            .then(a.cmp(&b))
    });
    ranked.truncate(k);

    if ranked.len() < k {
        let mut unseen: Vec<usize> = (0..pop.n_items())
            .filter(|i| !in_session.contains_key(i))
            .collect();
        unseen.sort_by(|&a, &b| pop.count(b).cmp(&pop.count(a)).then(a.cmp(&b)));
        ranked.extend(unseen.into_iter().take(k - ranked.len()));
    }
    ranked
}

impl Recommender for PopIndex {
    fn rank(&self, session_input: &[usize], k: usize) -> Result<Vec<usize>, Error> {
        Ok(spop_rank(session_input, self, k))
    }
}

/// Cosine similarity between two sorted, deduplicated index sets:
/// `|a ∩ b| / √(|a|·|b|)`. Always in `[0, 1]`; empty sets score 0.
pub fn binary_cosine(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut shared = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared as f64 / ((a.len() * b.len()) as f64).sqrt()
}

/// Session-based k-nearest-neighbor scorer over binary item sets.
#[derive(Clone, Debug)]
pub struct Sknn {
    /// Distinct sorted item set of each train session.
    sets: Vec<Vec<usize>>,
    /// item → train sessions containing it, for candidate retrieval.
    inverted: Vec<Vec<usize>>,
    n_items: usize,
    k_neighbors: usize,
}

impl Sknn {
    pub fn new(train: &[Session], n_items: usize, k_neighbors: usize) -> Self {
        let sets: Vec<Vec<usize>> = train
            .iter()
            .map(|s| {
                let mut set = s.items.clone();
                set.sort_unstable();
                set.dedup();
                set
            })
            .collect();
        let mut inverted = vec![Vec::new(); n_items];
        for (idx, set) in sets.iter().enumerate() {
            for &item in set {
                inverted[item].push(idx);
            }
        }
        Self {
            sets,
            inverted,
            n_items,
            k_neighbors,
        }
    }

    /// Sum of neighbor similarities per item: the `k_neighbors` train
    /// sessions most similar to the input (ties toward the earlier
    /// session) each add their similarity to every item they contain.
    /// Items in no neighbor score 0.
    pub fn score(&self, session_input: &[usize]) -> Vec<f64> {
        let mut current = session_input.to_vec();
        current.sort_unstable();
        current.dedup();

        let mut overlap: BTreeMap<usize, usize> = BTreeMap::new();
        for &item in &current {
            if item < self.n_items {
                for &session in &self.inverted[item] {
                    *overlap.entry(session).or_insert(0) += 1;
                }
            }
        }
        let mut neighbors: Vec<(f64, usize)> = overlap
            .into_iter()
            .map(|(session, shared)| {
                let denom = ((current.len() * self.sets[session].len()) as f64).sqrt();
                (shared as f64 / denom, session)
            })
            .collect();
        neighbors.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        neighbors.truncate(self.k_neighbors);

        let mut scores = vec![0.0; self.n_items];
        for (similarity, session) in neighbors {
            for &item in &self.sets[session] {
                scores[item] += similarity;
            }
        }
        scores
    }
}

/// One-shot convenience wrapper around [`Sknn`].
pub fn sknn_score(
    session_input: &[usize],
    train: &[Session],
    n_items: usize,
    k_neighbors: usize,
) -> Vec<f64> {
    Sknn::new(train, n_items, k_neighbors).score(session_input)
}

impl Recommender for Sknn {
    fn rank(&self, session_input: &[usize], k: usize) -> Result<Vec<usize>, Error> {
        Ok(rank_descending(&self.score(session_input), k))
    }
}
