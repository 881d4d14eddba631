//! Iterative k-NN graph construction.
//!
//! The build refines a random graph: each round samples a fixed number of
//! new/old neighbors per object, cross-matches the samples in per-object
//! local joins, and feeds the discovered closer neighbors back into the
//! lock-striped lists. Only the nearest discovery per sample role is inserted
//! unless the full-update ablation is requested.

mod join;
mod sample;
mod update;

pub use join::{local_join, nearest_object, pair_index, DistanceTable};
pub use sample::{parallel_sample, SampleLists};
pub(crate) use update::update_step;

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{KnnGraph, WorkGraph};
use crate::knn_list::SegmentedKnnList;
use crate::metric::MetricKind;
use crate::neighbor::NeighborEntry;
use crate::util::mix_seed;

/// Construction parameters.
#[derive(Debug, Clone)]
pub struct BuildParams {
    /// Graph degree.
    pub k: usize,
    /// Samples taken per flag class from each list; must stay below `k`.
    pub p: usize,
    /// Number of refinement iterations.
    pub max_iter: usize,
    pub seed: u64,
    /// Entries per list segment; segments stripe the per-list locks.
    pub seg_size: usize,
    /// When false, every computed pair is offered to both endpoint lists
    /// instead of only the nearest discovery per sample (ablation knob).
    pub selective_update: bool,
    /// When false, lists use a single segment/lock (ablation knob).
    pub segmented_locks: bool,
    /// Sequential single-order execution. Parallel runs produce equally valid
    /// graphs; this mode pins one ordering for reproducibility.
    pub deterministic: bool,
    /// Optional early exit: stop when an iteration inserts fewer than
    /// `threshold * n * k` entries. Off by default.
    pub early_exit: Option<f64>,
}

impl Default for BuildParams {
    fn default() -> Self {
        BuildParams {
            k: 32,
            p: 12,
            max_iter: 8,
            seed: 0,
            seg_size: 32,
            selective_update: true,
            segmented_locks: true,
            deterministic: false,
            early_exit: None,
        }
    }
}

impl BuildParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::usage("k must be at least 2"));
        }
        if self.p < 1 || self.p >= self.k {
            return Err(Error::usage(format!(
                "sample count p={} must satisfy 1 <= p < k={}",
                self.p, self.k
            )));
        }
        if self.max_iter < 1 {
            return Err(Error::usage("iteration count must be at least 1"));
        }
        if self.seg_size < 1 {
            return Err(Error::usage("segment size must be at least 1"));
        }
        if let Some(c) = self.early_exit {
            if !(c > 0.0) {
                return Err(Error::usage("early-exit threshold must be positive"));
            }
        }
        Ok(())
    }

    /// Segment width actually applied to lists; a single segment when lock
    /// striping is disabled.
    pub fn effective_seg_size(&self) -> usize {
        if self.segmented_locks {
            self.seg_size
        } else {
            self.k
        }
    }
}

/// Per-iteration measurements.
#[derive(Debug, Clone)]
pub struct IterStats {
    pub sample_secs: f64,
    pub join_secs: f64,
    pub update_secs: f64,
    pub finalize_secs: f64,
    /// Sum of stored distances after the iteration.
    pub phi: f64,
    pub dist_evals: u64,
    pub same_subset_evals: u64,
    pub insertions: u64,
}

/// Whole-build measurements.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub init_secs: f64,
    /// Sum of stored distances right after random initialization.
    pub phi_init: f64,
    pub iters: Vec<IterStats>,
    pub total_secs: f64,
}

impl BuildReport {
    /// Recorded quality series: initial value followed by one per iteration.
    pub fn phi_series(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.iters.len() + 1);
        out.push(self.phi_init);
        out.extend(self.iters.iter().map(|s| s.phi));
        out
    }

    pub fn dist_evals(&self) -> u64 {
        self.iters.iter().map(|s| s.dist_evals).sum()
    }

    pub fn insertions(&self) -> u64 {
        self.iters.iter().map(|s| s.insertions).sum()
    }
}

/// Runs `f` over `0..n`, in index order when `deterministic`.
pub(crate) fn map_objects<T, F>(n: usize, deterministic: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if deterministic {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Initializes every list with `k` distinct random neighbors (never the owner
/// itself), flagged new, with computed distances. Deterministic per seed: the
/// draw for each object comes from its own derived RNG stream.
pub fn init_random_graph(
    data: &Dataset,
    metric: MetricKind,
    params: &BuildParams,
) -> Result<WorkGraph> {
    params.validate()?;
    let n = data.len();
    if n <= params.k {
        return Err(Error::usage(format!(
            "need more than k={} objects, got {n}",
            params.k
        )));
    }
    let seg = params.effective_seg_size();
    let lists = map_objects(n, params.deterministic, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.seed, i as u64));
        let picks = rand::seq::index::sample(&mut rng, n - 1, params.k);
        let entries = picks
            .iter()
            .map(|x| {
                // x ranges over [0, n-1); skip the owner's own index.
                let id = if x >= i { x + 1 } else { x } as u32;
                NeighborEntry::new(id, metric.eval(data.row(i), data.row(id as usize)))
            })
            .collect();
        SegmentedKnnList::from_entries(params.k, seg, entries)
    });
    Ok(WorkGraph::from_lists(params.k, lists))
}

/// The shared iteration loop: sample, cross-match, update, finalize. When
/// `boundary` is set, pairs on the same side of it are never evaluated (used
/// by graph merging, where ids below the boundary form one subset).
pub(crate) fn run_iterations(
    work: &mut WorkGraph,
    data: &Dataset,
    metric: MetricKind,
    params: &BuildParams,
    boundary: Option<u32>,
) -> Vec<IterStats> {
    let n = work.len();
    let seg = params.effective_seg_size();
    let mut stats = Vec::with_capacity(params.max_iter);
    for it in 0..params.max_iter {
        let t0 = Instant::now();
        let samples = parallel_sample(work, params.p, params.deterministic);
        if it > 0 {
            // Lists are globally sorted after the previous finalize; split
            // them back into per-residue segments before inserting.
            work.resegment_all(seg);
        }
        let sample_secs = t0.elapsed().as_secs_f64();

        let step = update_step(work, data, metric, &samples, params, boundary);

        let t1 = Instant::now();
        work.mark_sampled_old_and_finalize(&samples.sampled_new);
        let finalize_secs = t1.elapsed().as_secs_f64();

        stats.push(IterStats {
            sample_secs,
            join_secs: step.join_secs,
            update_secs: step.apply_secs,
            finalize_secs,
            phi: work.phi(),
            dist_evals: step.evals,
            same_subset_evals: step.same_subset_evals,
            insertions: step.inserts,
        });

        if let Some(c) = params.early_exit {
            if (step.inserts as f64) < c * (n * params.k) as f64 {
                break;
            }
        }
    }
    stats
}

/// Full construction: random initialization followed by `max_iter` rounds of
/// sample / local join / selective update, ending with finalized lists.
pub fn construct(
    data: &Dataset,
    metric: MetricKind,
    params: &BuildParams,
) -> Result<(KnnGraph, BuildReport)> {
    let t0 = Instant::now();
    metric.validate_dataset(data)?;
    let mut work = init_random_graph(data, metric, params)?;
    let init_secs = t0.elapsed().as_secs_f64();
    let phi_init = work.phi();

    let iters = run_iterations(&mut work, data, metric, params, None);

    let report = BuildReport {
        init_secs,
        phi_init,
        iters,
        total_secs: t0.elapsed().as_secs_f64(),
    };
    Ok((work.into_graph(metric), report))
}
