//! Per-object cross-matching: batch distance tables over the sampled
//! neighbors and the min-reduction that picks what gets inserted.

use std::cmp::Ordering;

use crate::dataset::Dataset;
use crate::metric::MetricKind;
use crate::neighbor::{cmp_dist_id, SENTINEL_ID};

/// Distances of one local join. `new_new` is a packed lower triangle over the
/// `m` new samples: the pair `(u, v)` with `u > v` sits at `u(u-1)/2 + v`.
/// `new_old` is a dense `m x q` table over new rows and old columns. Entries
/// for skipped pairs (identical endpoints, or both on the same side of a
/// merge boundary) are infinity and are never selected.
#[derive(Debug)]
pub struct DistanceTable {
    pub m: usize,
    pub q: usize,
    pub new_new: Vec<f32>,
    pub new_old: Vec<f32>,
}

impl DistanceTable {
    /// Distance between new samples `u` and `v` (local indices, `u != v`).
    #[inline]
    pub fn new_new(&self, u: usize, v: usize) -> f32 {
        let (hi, lo) = if u > v { (u, v) } else { (v, u) };
        self.new_new[hi * (hi - 1) / 2 + lo]
    }

    /// Distance between new sample `u` and old sample `j`.
    #[inline]
    pub fn new_old(&self, u: usize, j: usize) -> f32 {
        self.new_old[u * self.q + j]
    }
}

/// Maps a flat task index to the sample pair `(u, v)` with `u > v >= 0` it is
/// responsible for; enumerates every unordered pair exactly once.
#[inline]
pub fn pair_index(t: usize) -> (usize, usize) {
    let mut u = ((2.0 * t as f64 + 2.25).sqrt() - 0.5).ceil() as usize;
    // Guard the row boundaries against float rounding.
    while u * (u - 1) / 2 > t {
        u -= 1;
    }
    while u * (u + 1) / 2 <= t {
        u += 1;
    }
    (u, t - u * (u - 1) / 2)
}

pub(crate) struct JoinCounters {
    pub evals: u64,
    pub same_subset_evals: u64,
}

#[inline]
fn same_side(boundary: u32, a: u32, b: u32) -> bool {
    (a < boundary) == (b < boundary)
}

/// Computes the distance tables for one object's sampled neighbors.
///
/// New-new distances fill the packed triangle via the task-to-pair mapping;
/// new-old distances are computed in cache-blocked tiles over both sample
/// sets. With fewer than two new samples the new-new phase is skipped; with
/// none the whole join is empty.
pub fn local_join(
    data: &Dataset,
    metric: MetricKind,
    new_ids: &[u32],
    old_ids: &[u32],
    boundary: Option<u32>,
) -> DistanceTable {
    let mut counters = JoinCounters {
        evals: 0,
        same_subset_evals: 0,
    };
    local_join_counted(data, metric, new_ids, old_ids, boundary, &mut counters)
}

pub(crate) fn local_join_counted(
    data: &Dataset,
    metric: MetricKind,
    new_ids: &[u32],
    old_ids: &[u32],
    boundary: Option<u32>,
    counters: &mut JoinCounters,
) -> DistanceTable {
    let m = new_ids.len();
    let q = old_ids.len();

    let mut dist = |a: u32, b: u32| -> f32 {
        if a == b {
            return f32::INFINITY;
        }
        if let Some(bnd) = boundary {
            if same_side(bnd, a, b) {
                return f32::INFINITY;
            }
        }
        // Every evaluation that does happen is classified by subset
        // membership, so a bypassed restriction shows up in the audit.
        counters.evals += 1;
        if let Some(bnd) = boundary {
            counters.same_subset_evals += same_side(bnd, a, b) as u64;
        }
        metric.eval(data.row(a as usize), data.row(b as usize))
    };

    let mut new_new = Vec::new();
    if m >= 2 {
        new_new.reserve(m * (m - 1) / 2);
        for t in 0..m * (m - 1) / 2 {
            let (u, v) = pair_index(t);
            new_new.push(dist(new_ids[u], new_ids[v]));
        }
    }

    // Tile over both sample axes so each block of vectors stays cache-hot.
    const TILE: usize = 16;
    let mut new_old = vec![0.0f32; m * q];
    for ub in (0..m).step_by(TILE) {
        for jb in (0..q).step_by(TILE) {
            for u in ub..(ub + TILE).min(m) {
                for j in jb..(jb + TILE).min(q) {
                    new_old[u * q + j] = dist(new_ids[u], old_ids[j]);
                }
            }
        }
    }

    DistanceTable {
        m,
        q,
        new_new,
        new_old,
    }
}

/// Returns the candidate with the minimum `(dist, id)` among `ids`, reading
/// distances through `dist_of`. Infinite entries are skipped; `None` stands
/// for the all-infinite/empty sentinel result. Correct for any candidate
/// count.
pub(crate) fn nearest_object_by<F: Fn(usize) -> f32>(
    ids: &[u32],
    dist_of: F,
) -> Option<(u32, f32)> {
    let mut best = (f32::INFINITY, SENTINEL_ID);
    for (i, &id) in ids.iter().enumerate() {
        let d = dist_of(i);
        if d.is_finite() && cmp_dist_id((d, id), best) == Ordering::Less {
            best = (d, id);
        }
    }
    (best.1 != SENTINEL_ID).then_some((best.1, best.0))
}

/// Slice form of the min-reduction: `dists[i]` is the distance of `ids[i]`.
pub fn nearest_object(ids: &[u32], dists: &[f32]) -> Option<(u32, f32)> {
    debug_assert_eq!(ids.len(), dists.len());
    nearest_object_by(ids, |i| dists[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval;
    use proptest::prelude::*;

    #[test]
    fn pair_index_known_values() {
        assert_eq!(pair_index(0), (1, 0));
        assert_eq!(pair_index(2), (2, 1));
        assert_eq!(pair_index(5), (3, 2));
    }

    #[test]
    fn pair_index_is_a_bijection_for_small_m() {
        for m in 2usize..=64 {
            let total = m * (m - 1) / 2;
            let mut seen = std::collections::HashSet::new();
            for t in 0..total {
                let (u, v) = pair_index(t);
                assert!(v < u && u < m, "t={t} gave ({u},{v})");
                assert!(seen.insert((u, v)));
            }
            assert_eq!(seen.len(), total);
        }
    }

    #[test]
    fn join_shapes_match_sample_counts() {
        let data = eval::uniform_dataset(10, 4, 1, 0.0, 1.0);
        let m = MetricKind::SquaredEuclidean;
        let t = local_join(&data, m, &[1, 2], &[], None);
        assert_eq!(t.new_new.len(), 1);
        let t = local_join(&data, m, &[1, 2, 3], &[4, 5], None);
        assert_eq!(t.new_new.len(), 3);
        assert_eq!(t.new_old.len(), 6);
    }

    #[test]
    fn join_entries_match_scalar_evaluation() {
        let data = eval::uniform_dataset(12, 6, 7, 0.0, 1.0);
        let metric = MetricKind::SquaredEuclidean;
        let new_ids = [0u32, 3, 5, 7];
        let old_ids = [1u32, 2, 9];
        let t = local_join(&data, metric, &new_ids, &old_ids, None);
        for u in 0..new_ids.len() {
            for v in 0..u {
                let want = metric.eval(
                    data.row(new_ids[u] as usize),
                    data.row(new_ids[v] as usize),
                );
                assert_eq!(t.new_new(u, v).to_bits(), want.to_bits());
            }
            for j in 0..old_ids.len() {
                let want = metric.eval(
                    data.row(new_ids[u] as usize),
                    data.row(old_ids[j] as usize),
                );
                assert_eq!(t.new_old(u, j).to_bits(), want.to_bits());
            }
        }
    }

    #[test]
    fn join_marks_self_and_same_side_pairs_infinite() {
        let data = eval::uniform_dataset(10, 4, 3, 0.0, 1.0);
        let m = MetricKind::SquaredEuclidean;
        // Id 4 appears as both a new and an old sample.
        let t = local_join(&data, m, &[2, 4], &[4, 6], None);
        assert!(t.new_old(1, 0).is_infinite());
        assert!(t.new_old(0, 0).is_finite());
        // With a boundary at 5, pairs within {0..4} or {5..9} are skipped.
        let t = local_join(&data, m, &[2, 6], &[3, 8], Some(5));
        assert!(t.new_new(1, 0).is_finite());
        assert!(t.new_old(0, 0).is_infinite());
        assert!(t.new_old(0, 1).is_finite());
        assert!(t.new_old(1, 1).is_infinite());
    }

    #[test]
    fn nearest_object_examples() {
        assert_eq!(
            nearest_object(&[5, 7, 3], &[0.9, 0.2, 0.4]),
            Some((7, 0.2))
        );
        assert_eq!(nearest_object(&[], &[]), None);
        // Ties break toward the smaller id.
        assert_eq!(nearest_object(&[5, 7], &[0.3, 0.3]), Some((5, 0.3)));
        assert_eq!(nearest_object(&[4], &[f32::INFINITY]), None);
    }

    proptest! {
        #[test]
        fn nearest_object_matches_sequential_argmin(
            cands in prop::collection::vec((0u32..5000, 0u32..1_000_000), 0..300),
        ) {
            let ids: Vec<u32> = cands.iter().map(|c| c.0).collect();
            let dists: Vec<f32> = cands.iter().map(|c| c.1 as f32 / 1024.0).collect();
            let want = ids
                .iter()
                .zip(&dists)
                .map(|(&id, &d)| (d, id))
                .min_by(|a, b| cmp_dist_id(*a, *b))
                .map(|(d, id)| (id, d));
            prop_assert_eq!(nearest_object(&ids, &dists), want);
        }
    }
}
