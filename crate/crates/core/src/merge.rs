//! Two-graph merge: combines finalized k-NN graphs over disjoint datasets.
//!
//! Each list keeps its nearest half, the back half is reseeded with random
//! objects from the other dataset, and the builder loop refines the combined
//! graph while skipping every same-subset pair (both sub-graphs are already
//! final, so only cross links can improve anything). The displaced halves are
//! folded back in at the end so nothing already known is lost.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::builder::{map_objects, run_iterations, BuildParams, IterStats};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{KnnGraph, WorkGraph};
use crate::knn_list::SegmentedKnnList;
use crate::metric::MetricKind;
use crate::neighbor::{Flag, NeighborEntry};
use crate::util::mix_seed;

/// State carried across the merge stages.
pub struct MergeContext {
    /// Ids below the boundary belong to the first dataset, the rest to the
    /// second. The restriction is keyed on this permanent membership, not on
    /// new/old flags, which change across iterations.
    pub boundary: u32,
    /// Per-object back-half entries displaced by the cross seeding, sorted
    /// ascending; folded back in by [`merge_finalize`].
    pub reserved: Vec<Vec<NeighborEntry>>,
}

/// Measurements of a merge run.
#[derive(Debug, Clone)]
pub struct MergeReport {
    pub init_secs: f64,
    pub init_evals: u64,
    pub iters: Vec<IterStats>,
}

impl MergeReport {
    pub fn same_subset_evals(&self) -> u64 {
        self.iters.iter().map(|s| s.same_subset_evals).sum()
    }
}

fn kept_front(k: usize) -> usize {
    k.div_ceil(2)
}

/// Seeds the combined graph: per list, the nearest `ceil(k/2)` entries stay
/// (flagged old), the rest are replaced by distinct random objects from the
/// other subset (flagged new, distances computed). Ids of `g2` are re-based
/// by `|S1|`. Returns the working graph, the merge context holding the
/// displaced halves, and the number of distances evaluated while seeding.
pub fn merge_init(
    g1: &KnnGraph,
    g2: &KnnGraph,
    data: &Dataset,
    params: &BuildParams,
) -> Result<(WorkGraph, MergeContext, u64)> {
    if g1.k() != g2.k() {
        return Err(Error::usage(format!(
            "cannot merge graphs of degree {} and {}",
            g1.k(),
            g2.k()
        )));
    }
    if g1.metric() != g2.metric() {
        return Err(Error::usage(format!(
            "cannot merge graphs built under {} and {}",
            g1.metric(),
            g2.metric()
        )));
    }
    let (n1, n2) = (g1.len(), g2.len());
    if data.len() != n1 + n2 {
        return Err(Error::usage(format!(
            "combined dataset has {} rows, graphs cover {}",
            data.len(),
            n1 + n2
        )));
    }
    let boundary = n1 as u32;
    let mut lists = Vec::with_capacity(n1 + n2);
    for i in 0..n1 {
        let entries = g1.list_entries(i, Flag::Old);
        if entries.iter().any(|e| e.id as usize >= n1) {
            return Err(Error::usage(
                "first graph references ids outside its own dataset",
            ));
        }
        lists.push(entries);
    }
    for j in 0..n2 {
        let mut entries = g2.list_entries(j, Flag::Old);
        if entries.iter().any(|e| e.id as usize >= n2) {
            return Err(Error::usage(
                "second graph references ids outside its own dataset",
            ));
        }
        for e in &mut entries {
            e.id += boundary;
        }
        lists.push(entries);
    }
    init_from_lists(lists, boundary, data, g1.metric(), params)
}

/// Shared seeding over pre-assembled lists in the combined id space. Lists
/// may hold fewer than `k` entries (the shard pipeline strips entries it
/// cannot resolve); every missing slot is filled with a cross-subset seed.
pub(crate) fn init_from_lists(
    lists: Vec<Vec<NeighborEntry>>,
    boundary: u32,
    data: &Dataset,
    metric: MetricKind,
    params: &BuildParams,
) -> Result<(WorkGraph, MergeContext, u64)> {
    params.validate()?;
    let k = params.k;
    let n = data.len();
    let n1 = boundary as usize;
    let n2 = n - n1;
    let cross_needed = k - kept_front(k);
    if n1 < cross_needed || n2 < cross_needed {
        return Err(Error::usage(format!(
            "each subset must offer at least {cross_needed} distinct cross samples \
             (sizes {n1} and {n2})"
        )));
    }
    if lists.len() != n {
        return Err(Error::usage(format!(
            "expected {n} seed lists, got {}",
            lists.len()
        )));
    }
    let seg = params.effective_seg_size();
    let merge_seed = mix_seed(params.seed, 0x4d45_5247);

    let seeded: Result<Vec<(SegmentedKnnList, Vec<NeighborEntry>, u64)>> =
        map_objects(n, params.deterministic, |i| {
            let mut entries = lists[i].clone();
            debug_assert!(entries
                .windows(2)
                .all(|w| w[0].cmp_dist_id(&w[1]).is_le()));
            let keep = kept_front(k).min(entries.len());
            let reserved: Vec<NeighborEntry> = entries.split_off(keep);
            for e in &mut entries {
                e.flag = Flag::Old;
            }

            // Draw distinct cross-subset seeds, redrawing any collision with
            // a kept id.
            let (lo, hi) = if (i as u32) < boundary {
                (boundary, n as u32)
            } else {
                (0, boundary)
            };
            let kept_in_range: Vec<u32> = entries
                .iter()
                .map(|e| e.id)
                .filter(|id| (lo..hi).contains(id))
                .collect();
            let need = k - entries.len();
            if ((hi - lo) as usize) < need + kept_in_range.len() {
                return Err(Error::usage(format!(
                    "object {i}: subset offers too few distinct cross samples"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(merge_seed, i as u64));
            let mut drawn: Vec<u32> = Vec::with_capacity(need);
            let mut evals = 0u64;
            while drawn.len() < need {
                let id = rng.random_range(lo..hi);
                if kept_in_range.contains(&id) || drawn.contains(&id) {
                    continue;
                }
                drawn.push(id);
            }
            for id in drawn {
                let dist = metric.eval(data.row(i), data.row(id as usize));
                evals += 1;
                entries.push(NeighborEntry::new(id, dist));
            }
            Ok((
                SegmentedKnnList::from_entries(k, seg, entries),
                reserved,
                evals,
            ))
        })
        .into_iter()
        .collect();

    let mut work_lists = Vec::with_capacity(n);
    let mut reserved = Vec::with_capacity(n);
    let mut init_evals = 0;
    for (list, res, evals) in seeded? {
        work_lists.push(list);
        reserved.push(res);
        init_evals += evals;
    }
    Ok((
        WorkGraph::from_lists(k, work_lists),
        MergeContext { boundary, reserved },
        init_evals,
    ))
}

/// Refines the seeded graph with the builder loop; pairs on the same side of
/// the boundary are never evaluated and can never be inserted.
pub fn merge_refine(
    work: &mut WorkGraph,
    ctx: &MergeContext,
    data: &Dataset,
    metric: MetricKind,
    params: &BuildParams,
) -> Vec<IterStats> {
    run_iterations(work, data, metric, params, Some(ctx.boundary))
}

/// Folds the displaced halves back in: each output list is the k smallest
/// `(dist, id)` entries of the refined list and its reserve, deduplicated.
pub fn merge_finalize(mut work: WorkGraph, ctx: &MergeContext, metric: MetricKind) -> KnnGraph {
    work.finalize_all();
    let k = work.k();
    let rows: Vec<Vec<(u32, f32)>> = (0..work.len())
        .into_par_iter()
        .map(|i| {
            let mut pool = work.list(i).snapshot();
            pool.extend_from_slice(&ctx.reserved[i]);
            pool.sort_unstable_by(NeighborEntry::cmp_dist_id);
            pool.dedup_by_key(|e| e.id);
            pool.truncate(k);
            debug_assert_eq!(pool.len(), k);
            pool.into_iter().map(|e| (e.id, e.dist)).collect()
        })
        .collect();
    KnnGraph::from_lists(metric, k, rows).expect("merged lists have degree k")
}

/// Whole merge: seed, refine, fold back.
pub fn merge_graphs(
    g1: &KnnGraph,
    g2: &KnnGraph,
    data: &Dataset,
    params: &BuildParams,
) -> Result<(KnnGraph, MergeReport)> {
    let t0 = Instant::now();
    let (mut work, ctx, init_evals) = merge_init(g1, g2, data, params)?;
    let init_secs = t0.elapsed().as_secs_f64();
    let iters = merge_refine(&mut work, &ctx, data, g1.metric(), params);
    let report = MergeReport {
        init_secs,
        init_evals,
        iters,
    };
    Ok((merge_finalize(work, &ctx, g1.metric()), report))
}
