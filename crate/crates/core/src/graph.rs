//! Graph containers: a lock-striped working graph used during construction
//! and a dense finalized graph used for persistence and evaluation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::knn_list::SegmentedKnnList;
use crate::metric::MetricKind;
use crate::neighbor::{Flag, NeighborEntry};
use crate::util::KahanSum;

/// A finalized k-NN graph: `n` lists of exactly `k` neighbors, each list
/// sorted ascending by `(dist, id)`. Neighbor ids may exceed `n` for shard
/// sub-graphs whose lists reference objects of other shards.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    n: usize,
    k: usize,
    metric: MetricKind,
    ids: Vec<u32>,
    dists: Vec<f32>,
}

impl KnnGraph {
    pub fn from_parts(
        n: usize,
        k: usize,
        metric: MetricKind,
        ids: Vec<u32>,
        dists: Vec<f32>,
    ) -> Result<Self> {
        if n == 0 || k == 0 || ids.len() != n * k || dists.len() != n * k {
            return Err(Error::usage(format!(
                "graph shape mismatch: n={n} k={k} ids={} dists={}",
                ids.len(),
                dists.len()
            )));
        }
        Ok(KnnGraph {
            n,
            k,
            metric,
            ids,
            dists,
        })
    }

    pub fn from_lists(metric: MetricKind, k: usize, lists: Vec<Vec<(u32, f32)>>) -> Result<Self> {
        let n = lists.len();
        let mut ids = Vec::with_capacity(n * k);
        let mut dists = Vec::with_capacity(n * k);
        for (i, list) in lists.iter().enumerate() {
            if list.len() != k {
                return Err(Error::usage(format!(
                    "list {i} has {} entries, expected {k}",
                    list.len()
                )));
            }
            ids.extend(list.iter().map(|e| e.0));
            dists.extend(list.iter().map(|e| e.1));
        }
        KnnGraph::from_parts(n, k, metric, ids, dists)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    #[inline]
    pub fn list_ids(&self, i: usize) -> &[u32] {
        &self.ids[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn list_dists(&self, i: usize) -> &[f32] {
        &self.dists[i * self.k..(i + 1) * self.k]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.list_ids(i)
            .iter()
            .copied()
            .zip(self.list_dists(i).iter().copied())
    }

    /// One list as entries, all flagged `flag`.
    pub fn list_entries(&self, i: usize, flag: Flag) -> Vec<NeighborEntry> {
        self.neighbors(i)
            .map(|(id, dist)| NeighborEntry { id, dist, flag })
            .collect()
    }

    /// Sum of all stored distances.
    pub fn phi(&self) -> f64 {
        let mut acc = KahanSum::default();
        for d in &self.dists {
            acc.add(*d as f64);
        }
        acc.value()
    }
}

/// A graph under construction: one segmented list per object, safe to update
/// concurrently with segment-granular locking.
pub struct WorkGraph {
    k: usize,
    lists: Vec<SegmentedKnnList>,
}

impl WorkGraph {
    pub fn from_lists(k: usize, lists: Vec<SegmentedKnnList>) -> Self {
        debug_assert!(lists.iter().all(|l| l.k() == k));
        WorkGraph { k, lists }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.lists.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn list(&self, i: usize) -> &SegmentedKnnList {
        &self.lists[i]
    }

    /// Merges every list's segments into one globally sorted list.
    pub fn finalize_all(&mut self) {
        self.lists.par_iter_mut().for_each(|l| l.finalize());
    }

    /// Rebuilds every list's segment layout for the next insert round.
    pub fn resegment_all(&mut self, seg_size: usize) {
        self.lists
            .par_iter_mut()
            .for_each(|l| l.resegment(seg_size));
    }

    /// Re-flags the sampled neighbors of each object as old, then finalizes.
    /// `sampled[i]` must be sorted ascending.
    pub fn mark_sampled_old_and_finalize(&mut self, sampled: &[Vec<u32>]) {
        debug_assert_eq!(sampled.len(), self.lists.len());
        self.lists
            .par_iter_mut()
            .zip(sampled.par_iter())
            .for_each(|(list, ids)| {
                if !ids.is_empty() {
                    list.mark_old(ids);
                }
                list.finalize();
            });
    }

    /// Sum of all stored (non-sentinel) distances.
    pub fn phi(&self) -> f64 {
        let mut acc = KahanSum::default();
        for list in &self.lists {
            list.add_distances(&mut acc);
        }
        acc.value()
    }

    /// Converts into a dense graph. Every list must be finalized and hold
    /// exactly `k` real entries.
    pub fn into_graph(self, metric: MetricKind) -> KnnGraph {
        let n = self.lists.len();
        let k = self.k;
        let mut ids = Vec::with_capacity(n * k);
        let mut dists = Vec::with_capacity(n * k);
        for list in &self.lists {
            let snap = list.snapshot();
            assert_eq!(snap.len(), k);
            for e in snap {
                assert!(!e.is_sentinel(), "finalized list holds a sentinel entry");
                ids.push(e.id);
                dists.push(e.dist);
            }
        }
        KnnGraph {
            n,
            k,
            metric,
            ids,
            dists,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_lists_enforces_shape() {
        let lists = vec![vec![(1u32, 0.5f32)], vec![(0, 0.5), (2, 0.6)]];
        assert!(KnnGraph::from_lists(MetricKind::SquaredEuclidean, 1, lists).is_err());
    }

    #[test]
    fn phi_sums_all_distances() {
        let g = KnnGraph::from_lists(
            MetricKind::SquaredEuclidean,
            1,
            vec![vec![(1, 0.3)], vec![(0, 0.7)]],
        )
        .unwrap();
        assert!((g.phi() - 1.0).abs() < 1e-12);
    }
}
