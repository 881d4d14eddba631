//! Fixed-size neighbor sampling.
//!
//! Instead of dynamic candidate arrays, each object gets bounded new/old
//! sample lists of capacity `2p`: the first `p` neighbors of each flag class
//! in storage order, plus reverse neighbors appended until the capacity bound.

use super::map_objects;
use crate::graph::WorkGraph;
use crate::neighbor::Flag;

/// Per-object new/old sample adjacency lists.
#[derive(Debug)]
pub struct SampleLists {
    /// Capacity bound per list (`2p`).
    pub cap: usize,
    /// Sampled new neighbors plus reverse contributions; sorted, deduplicated.
    pub new_ids: Vec<Vec<u32>>,
    /// Same for old neighbors.
    pub old_ids: Vec<Vec<u32>>,
    /// Forward new samples of each object (sorted): exactly the list entries
    /// that must be re-flagged old once the iteration's update completes.
    pub sampled_new: Vec<Vec<u32>>,
}

/// Collects sample lists from the current graph.
///
/// Phase 1 takes the first `p` new-flagged and first `p` old-flagged ids of
/// each list in storage order. Phase 2 appends reverse edges: if `s` sampled
/// `v`, then `s` is appended to `v`'s list while its occupancy is below `2p`,
/// in ascending source order. Phase 3 sorts and deduplicates each list.
pub fn parallel_sample(work: &WorkGraph, p: usize, deterministic: bool) -> SampleLists {
    let n = work.len();
    let cap = 2 * p;

    let forward: Vec<(Vec<u32>, Vec<u32>)> = map_objects(n, deterministic, |s| {
        let mut fwd_new = Vec::with_capacity(p);
        let mut fwd_old = Vec::with_capacity(p);
        work.list(s).scan(|e| {
            if !e.is_sentinel() {
                match e.flag {
                    Flag::New if fwd_new.len() < p => fwd_new.push(e.id),
                    Flag::Old if fwd_old.len() < p => fwd_old.push(e.id),
                    _ => {}
                }
            }
            fwd_new.len() < p || fwd_old.len() < p
        });
        (fwd_new, fwd_old)
    });

    let new_ids = reverse_fill(&forward, n, cap, deterministic, |f| &f.0);
    let old_ids = reverse_fill(&forward, n, cap, deterministic, |f| &f.1);

    let sampled_new = forward
        .into_iter()
        .map(|(mut fwd_new, _)| {
            fwd_new.sort_unstable();
            fwd_new
        })
        .collect();

    SampleLists {
        cap,
        new_ids,
        old_ids,
        sampled_new,
    }
}

/// Appends reverse edges in ascending source order up to the capacity bound,
/// then sorts and deduplicates every list. The ascending order makes both the
/// sequential and the parallel build see identical samples.
fn reverse_fill<F>(
    forward: &[(Vec<u32>, Vec<u32>)],
    n: usize,
    cap: usize,
    deterministic: bool,
    class: F,
) -> Vec<Vec<u32>>
where
    F: Fn(&(Vec<u32>, Vec<u32>)) -> &Vec<u32> + Sync + Send,
{
    let mut reverse: Vec<(u32, u32)> = Vec::new();
    for (s, f) in forward.iter().enumerate() {
        for &v in class(f) {
            reverse.push((v, s as u32));
        }
    }
    reverse.sort_unstable();

    let mut lists: Vec<Vec<u32>> = forward.iter().map(|f| class(f).clone()).collect();
    for (v, s) in reverse {
        let list = &mut lists[v as usize];
        if list.len() < cap {
            list.push(s);
        }
    }

    map_objects(n, deterministic, |i| {
        let mut list = lists[i].clone();
        list.sort_unstable();
        list.dedup();
        list
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn_list::SegmentedKnnList;
    use crate::neighbor::NeighborEntry;

    fn entry(id: u32, dist: f32, new: bool) -> NeighborEntry {
        if new {
            NeighborEntry::new(id, dist)
        } else {
            NeighborEntry::old(id, dist)
        }
    }

    fn graph_of(lists: Vec<Vec<NeighborEntry>>, k: usize) -> WorkGraph {
        WorkGraph::from_lists(
            k,
            lists
                .into_iter()
                .map(|l| SegmentedKnnList::from_entries(k, k, l))
                .collect(),
        )
    }

    #[test]
    fn forward_sampling_is_positional() {
        // Storage order of object 0: (1, new), (2, old), (3, new), (4, new).
        let work = graph_of(
            vec![
                vec![
                    entry(1, 0.1, true),
                    entry(2, 0.2, false),
                    entry(3, 0.3, true),
                    entry(4, 0.4, true),
                ],
                vec![
                    entry(2, 0.1, false),
                    entry(3, 0.2, false),
                    entry(4, 0.3, false),
                    entry(0, 0.4, false),
                ],
                vec![
                    entry(3, 0.1, false),
                    entry(4, 0.2, false),
                    entry(0, 0.3, false),
                    entry(1, 0.4, false),
                ],
                vec![
                    entry(4, 0.1, false),
                    entry(0, 0.2, false),
                    entry(1, 0.3, false),
                    entry(2, 0.4, false),
                ],
                vec![
                    entry(0, 0.1, false),
                    entry(1, 0.2, false),
                    entry(2, 0.3, false),
                    entry(3, 0.4, false),
                ],
            ],
            4,
        );
        let samples = parallel_sample(&work, 2, true);
        // First two new ids of object 0 are 1 and 3; 4 is not sampled.
        assert_eq!(samples.sampled_new[0], vec![1, 3]);
        // Reverse edges: objects 1 and 3 were sampled by 0, object 4 was not.
        assert!(samples.new_ids[1].contains(&0));
        assert_eq!(samples.new_ids[3], vec![0]);
        assert!(samples.new_ids[4].is_empty());
    }

    #[test]
    fn reverse_appends_respect_capacity_and_dedup() {
        // Objects 1..=5 all sample object 0; p = 1 so cap = 2.
        let work = graph_of(
            vec![
                vec![entry(5, 0.1, true), entry(2, 0.9, false)],
                vec![entry(0, 0.1, true), entry(3, 0.9, false)],
                vec![entry(0, 0.1, true), entry(4, 0.9, false)],
                vec![entry(0, 0.1, true), entry(5, 0.9, false)],
                vec![entry(0, 0.1, true), entry(2, 0.9, false)],
                vec![entry(0, 0.1, true), entry(1, 0.9, false)],
            ],
            2,
        );
        let samples = parallel_sample(&work, 1, true);
        // Object 0 keeps its forward sample (5) plus the smallest reverse
        // source; the rest hit the capacity bound.
        assert_eq!(samples.new_ids[0], vec![1, 5]);
        // A reverse source equal to the forward sample collapses after dedup.
        assert_eq!(samples.new_ids[5], vec![0]);
        for list in samples.new_ids.iter().chain(&samples.old_ids) {
            assert!(list.len() <= samples.cap);
            assert!(list.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
