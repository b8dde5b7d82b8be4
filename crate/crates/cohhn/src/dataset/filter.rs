//! Iterative rare-item / short-session filtering and catalog indexing.

use std::collections::BTreeMap;

use super::{CatalogItem, IndexedSession, ItemCatalog, RawSession};
use crate::error::DataError;

/// Drop items occurring fewer than `min_item_count` times and sessions
/// shorter than `min_session_len`, repeating until neither rule fires
/// (removing an item can shorten a session below the limit, which in
/// turn lowers other items' counts). Survivors are indexed by sorted
/// item id; each item's price and category are its last observation in
/// timestamp order.
pub fn filter_and_index(
    sessions: &[RawSession],
    min_item_count: usize,
    min_session_len: usize,
) -> Result<(ItemCatalog, Vec<IndexedSession>), DataError> {
    // Work on (session metadata, surviving event indices) pairs.
    let mut kept: Vec<(usize, Vec<usize>)> = sessions
        .iter()
        .enumerate()
        .map(|(s, raw)| (s, (0..raw.events.len()).collect()))
        .collect();
    kept.retain(|(_, events)| events.len() >= min_session_len);

    loop {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (s, events) in &kept {
            for &e in events {
                *counts
                    .entry(sessions[*s].events[e].item_id.as_str())
                    .or_default() += 1;
            }
        }
        let mut changed = false;
        for (s, events) in &mut kept {
            let before = events.len();
            events.retain(|&e| counts[sessions[*s].events[e].item_id.as_str()] >= min_item_count);
            changed |= events.len() != before;
        }
        let before = kept.len();
        kept.retain(|(_, events)| events.len() >= min_session_len);
        changed |= kept.len() != before;
        if !changed {
            break;
        }
    }

    if kept.is_empty() {
        return Err(DataError::EmptyDataset);
    }

    // Latest (timestamp, order-of-appearance) observation per item.
    let mut latest: BTreeMap<&str, (i64, f64, &str)> = BTreeMap::new();
    for (s, events) in &kept {
        for &e in events {
            let ev = &sessions[*s].events[e];
            let entry = latest
                .entry(ev.item_id.as_str())
                .or_insert((ev.timestamp, ev.price, ev.category.as_str()));
            if ev.timestamp >= entry.0 {
                *entry = (ev.timestamp, ev.price, ev.category.as_str());
            }
        }
    }

    let mut categories: Vec<String> = latest.values().map(|(_, _, c)| c.to_string()).collect();
    categories.sort();
    categories.dedup();

    // BTreeMap iteration is already sorted by item id, which fixes the
    // contiguous index assignment.
    let mut index_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut items = Vec::with_capacity(latest.len());
    for (id, (_, price, category)) in &latest {
        index_of.insert(id, items.len());
        items.push(CatalogItem {
            item_id: id.to_string(),
            category: categories
                .binary_search_by(|c| c.as_str().cmp(category))
                .expect("category recorded above"),
            price: *price,
            price_level: 0,
        });
    }

    let indexed = kept
        .iter()
        .map(|(s, events)| {
            let raw = &sessions[*s];
            IndexedSession {
                session_key: raw.session_key.clone(),
                start: raw.events[events[0]].timestamp,
                items: events
                    .iter()
                    .map(|&e| index_of[raw.events[e].item_id.as_str()])
                    .collect(),
            }
        })
        .collect();

    Ok((
        ItemCatalog {
            items,
            categories,
            price_levels: 0,
            stats: BTreeMap::new(),
        },
        indexed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interaction;

    /// Build raw sessions from bare item-id lists; timestamps rise
    /// monotonically so "last observation" is well defined.
    fn raw(sessions: &[&[&str]]) -> Vec<RawSession> {
        let mut ts = 0;
        sessions
            .iter()
            .enumerate()
            .map(|(i, ids)| {
                let events: Vec<_> = ids
                    .iter()
                    .map(|id| {
                        ts += 1;
                        Interaction {
                            session_key: format!("s{i}"),
                            timestamp: ts,
                            item_id: id.to_string(),
                            price: 1.0,
                            category: "c".into(),
                        }
                    })
                    .collect();
                RawSession {
                    session_key: format!("s{i}"),
                    start: events[0].timestamp,
                    events,
                }
            })
            .collect()
    }

    #[test]
    fn item_below_count_threshold_is_dropped() {
        // "a" appears 9 times, "b" and "c" 10 times each.
        let mut sessions: Vec<&[&str]> = Vec::new();
        for _ in 0..9 {
            sessions.push(&["a", "b", "c"]);
        }
        sessions.push(&["b", "c"]);
        let (catalog, _) = filter_and_index(&raw(&sessions), 10, 2).unwrap();
        assert_eq!(catalog.index_of("a"), None);
        assert!(catalog.index_of("b").is_some());
        assert_eq!(catalog.len(), 2);
    }

    #[test]
    fn session_shrunk_below_two_is_dropped() {
        let mut sessions: Vec<&[&str]> = vec![&["rare", "common"]];
        for _ in 0..5 {
            sessions.push(&["common", "common"]);
        }
        let (_, kept) = filter_and_index(&raw(&sessions), 10, 2).unwrap();
        // First session loses "rare" (1 occurrence), drops to length 1.
        assert_eq!(kept.len(), 5);
        assert!(kept.iter().all(|s| s.items.len() == 2));
    }

    #[test]
    fn cascade_matches_bruteforce_refiltering() {
        // "glue" only survives through sessions that themselves only
        // survive through "glue": the cascade needs several rounds.
        let sessions: Vec<&[&str]> = vec![
            &["glue", "rare1"],
            &["glue", "rare2"],
            &["glue", "rare3"],
            &["solid", "solid", "solid"],
        ];
        let raw_sessions = raw(&sessions);

        // Brute-force oracle: refilter from scratch until stable.
        let mut surviving: Vec<Vec<&str>> = sessions.iter().map(|s| s.to_vec()).collect();
        loop {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for s in &surviving {
                for id in s {
                    *counts.entry(id).or_default() += 1;
                }
            }
            let next: Vec<Vec<&str>> = surviving
                .iter()
                .map(|s| {
                    s.iter()
                        .copied()
                        .filter(|id| counts[id] >= 3)
                        .collect::<Vec<_>>()
                })
                .filter(|s| s.len() >= 2)
                .collect();
            if next == surviving {
                break;
            }
            surviving = next;
        }
        let mut oracle_items: Vec<&str> = surviving.iter().flatten().copied().collect();
        oracle_items.sort();
        oracle_items.dedup();

        let result = filter_and_index(&raw_sessions, 3, 2);
        match (oracle_items.is_empty(), result) {
            (true, Err(DataError::EmptyDataset)) => {}
            (false, Ok((catalog, kept))) => {
                let ids: Vec<&str> = catalog.items.iter().map(|i| i.item_id.as_str()).collect();
                assert_eq!(ids, oracle_items);
                assert_eq!(kept.len(), surviving.len());
            }
            (oracle_empty, got) => panic!(
                "oracle empty={oracle_empty} but filter said {:?}",
                got.map(|(c, k)| (c.len(), k.len()))
            ),
        }
    }

    #[test]
    fn refiltering_output_is_identity() {
        let sessions: Vec<&[&str]> = vec![
            &["a", "b", "x"],
            &["a", "b"],
            &["a", "b", "y"],
            &["a", "b"],
        ];
        let raw_sessions = raw(&sessions);
        let (catalog, kept) = filter_and_index(&raw_sessions, 4, 2).unwrap();

        // Rebuild raw sessions from the output and run again.
        let rebuilt: Vec<RawSession> = kept
            .iter()
            .map(|s| RawSession {
                session_key: s.session_key.clone(),
                start: s.start,
                events: s
                    .items
                    .iter()
                    .enumerate()
                    .map(|(k, &idx)| Interaction {
                        session_key: s.session_key.clone(),
                        timestamp: s.start + k as i64,
                        item_id: catalog.items[idx].item_id.clone(),
                        price: catalog.items[idx].price,
                        category: catalog.categories[catalog.items[idx].category].clone(),
                    })
                    .collect(),
            })
            .collect();
        let (catalog2, kept2) = filter_and_index(&rebuilt, 4, 2).unwrap();
        assert_eq!(catalog.items, catalog2.items);
        assert_eq!(
            kept.iter().map(|s| &s.items).collect::<Vec<_>>(),
            kept2.iter().map(|s| &s.items).collect::<Vec<_>>()
        );
    }

    #[test]
    fn everything_filtered_is_an_error() {
        let sessions: Vec<&[&str]> = vec![&["a", "b"]];
        assert!(matches!(
            filter_and_index(&raw(&sessions), 10, 2),
            Err(DataError::EmptyDataset)
        ));
    }

    #[test]
    fn last_observation_sets_price_and_category() {
        let mut sessions = raw(&[&["a", "b"], &["a", "b"]]);
        // Make the later "a" observation carry a different price.
        sessions[1].events[0].price = 9.0;
        let (catalog, _) = filter_and_index(&sessions, 2, 2).unwrap();
        let a = catalog.index_of("a").unwrap();
        assert_eq!(catalog.items[a].price, 9.0);
    }
}
