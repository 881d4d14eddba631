//! Ground truth, quality metrics, and the ablation harness.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU32, Ordering as AtomicOrdering};
use std::time::Instant;

use parking_lot::Mutex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::builder::{construct, BuildParams, BuildReport};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::KnnGraph;
use crate::metric::MetricKind;
use crate::neighbor::cmp_dist_id;

/// Uniform random dataset in `[lo, hi)^d`; the standard synthetic workload
/// for tests and benchmarks.
pub fn uniform_dataset(n: usize, d: usize, seed: u64, lo: f32, hi: f32) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.random_range(lo..hi)).collect();
    Dataset::new(d, data).expect("synthetic dataset is well-formed")
}

/// Exact k-NN graph by full pairwise scan; the reference oracle for recall.
pub fn brute_force_graph(data: &Dataset, metric: MetricKind, k: usize) -> Result<KnnGraph> {
    brute_force_graph_counted(data, metric, k).map(|(g, _)| g)
}

/// Brute-force oracle plus its distance-evaluation count. Each unordered
/// pair is evaluated exactly once, so the count is `n(n-1)/2`.
pub fn brute_force_graph_counted(
    data: &Dataset,
    metric: MetricKind,
    k: usize,
) -> Result<(KnnGraph, u64)> {
    let n = data.len();
    if k == 0 || n <= k {
        return Err(Error::usage(format!(
            "brute force needs n > k >= 1, got n={n} k={k}"
        )));
    }
    metric.validate_dataset(data)?;

    struct Slot {
        list: Mutex<Vec<(f32, u32)>>,
        // Bits of the current k-th distance once the list is full; positive
        // floats compare like their bit patterns, so a relaxed load gives a
        // safe (only ever stale-high) skip threshold.
        max_bits: AtomicU32,
    }
    let slots: Vec<Slot> = (0..n)
        .map(|_| Slot {
            list: Mutex::new(Vec::with_capacity(k + 1)),
            max_bits: AtomicU32::new(f32::INFINITY.to_bits()),
        })
        .collect();

    let offer = |target: usize, cand: (f32, u32)| {
        if cand.0.to_bits() > slots[target].max_bits.load(AtomicOrdering::Relaxed) {
            return;
        }
        let mut list = slots[target].list.lock();
        if list.len() == k {
            let worst = *list.last().unwrap();
            if cmp_dist_id(cand, worst) != Ordering::Less {
                return;
            }
            list.pop();
        }
        let pos = list.partition_point(|e| cmp_dist_id(*e, cand) == Ordering::Less);
        list.insert(pos, cand);
        if list.len() == k {
            slots[target]
                .max_bits
                .store(list.last().unwrap().0.to_bits(), AtomicOrdering::Relaxed);
        }
    };

    let evals: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let row_i = data.row(i);
            for j in i + 1..n {
                let d = metric.eval(row_i, data.row(j));
                offer(i, (d, j as u32));
                offer(j, (d, i as u32));
            }
            (n - i - 1) as u64
        })
        .sum();

    let mut ids = Vec::with_capacity(n * k);
    let mut dists = Vec::with_capacity(n * k);
    for slot in &slots {
        let list = slot.list.lock();
        debug_assert_eq!(list.len(), k);
        for &(d, id) in list.iter() {
            ids.push(id);
            dists.push(d);
        }
    }
    Ok((KnnGraph::from_parts(n, k, metric, ids, dists)?, evals))
}

/// Fraction of true top-`k_eval` neighbors present in the constructed lists,
/// averaged over all nodes.
///
/// When the truth has ties at the k-th distance, any entry at the tied
/// distance counts as correct, so valid tie orderings are not penalized.
pub fn recall_at_k(graph: &KnnGraph, truth: &KnnGraph, k_eval: usize) -> Result<f64> {
    if graph.len() != truth.len() {
        return Err(Error::usage(format!(
            "graphs cover different object counts: {} vs {}",
            graph.len(),
            truth.len()
        )));
    }
    if k_eval == 0 || k_eval > graph.k() || k_eval > truth.k() {
        return Err(Error::usage(format!(
            "recall@{k_eval} needs both degrees >= {k_eval} (got {} and {})",
            graph.k(),
            truth.k()
        )));
    }
    let n = graph.len();
    let hits: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let true_ids = &truth.list_ids(i)[..k_eval];
            let threshold = truth.list_dists(i)[k_eval - 1];
            let mut count = 0usize;
            for (id, dist) in graph
                .list_ids(i)
                .iter()
                .zip(graph.list_dists(i))
                .take(k_eval)
            {
                if true_ids.contains(id) || *dist == threshold {
                    count += 1;
                }
            }
            count.min(k_eval) as u64
        })
        .sum();
    Ok(hits as f64 / (n * k_eval) as f64)
}

/// Recall against id-only ground truth (e.g. loaded from an ivecs file).
pub fn recall_vs_ids(graph: &KnnGraph, truth_ids: &[Vec<u32>], k_eval: usize) -> Result<f64> {
    if graph.len() != truth_ids.len() {
        return Err(Error::usage(format!(
            "graph covers {} objects but truth has {} rows",
            graph.len(),
            truth_ids.len()
        )));
    }
    if k_eval == 0 || k_eval > graph.k() || truth_ids.iter().any(|row| row.len() < k_eval) {
        return Err(Error::usage(format!("recall@{k_eval}: degree too small")));
    }
    let n = graph.len();
    let hits: u64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let true_ids = &truth_ids[i][..k_eval];
            graph
                .list_ids(i)
                .iter()
                .take(k_eval)
                .filter(|id| true_ids.contains(id))
                .count() as u64
        })
        .sum();
    Ok(hits as f64 / (n * k_eval) as f64)
}

/// Sum of all stored distances; a scalar proxy for overall graph quality.
pub fn phi(graph: &KnnGraph) -> f64 {
    graph.phi()
}

/// The three harness variants: full update on one segment, selective update
/// on one segment, selective update with striped segments.
pub const ABLATION_VARIANTS: [(&str, bool, bool); 3] = [
    ("full-update", false, false),
    ("selective", true, false),
    ("selective-striped", true, true),
];

/// One harness run.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub variant: &'static str,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub p: usize,
    pub iters: usize,
    pub total_secs: f64,
    pub recall_at_10: Option<f64>,
    pub phi: f64,
    pub dist_evals: u64,
    /// Per-iteration detail (phase walls, quality series, counters).
    pub report: BuildReport,
}

#[derive(Debug, Clone, Default)]
pub struct BenchSummary {
    pub rows: Vec<BenchRow>,
}

pub const CSV_HEADER: &str = "variant,n,d,k,p,iter,phase,seconds,recall_at_10,phi,dist_evals";

impl BenchSummary {
    /// One CSV line per run under the documented header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let recall = r
                .recall_at_10
                .map(|x| format!("{x:.6}"))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},total,{:.6},{},{:.6},{}",
                r.variant, r.n, r.d, r.k, r.p, r.iters, r.total_secs, recall, r.phi, r.dist_evals
            );
        }
        out
    }
}

/// Runs every `(k, p)` grid point under all three variants with shared seeds.
/// Recall is reported when a truth graph of degree >= 10 is supplied.
pub fn run_ablation(
    data: &Dataset,
    metric: MetricKind,
    base: &BuildParams,
    grid: &[(usize, usize)],
    truth: Option<&KnnGraph>,
) -> Result<BenchSummary> {
    let mut rows = Vec::with_capacity(grid.len() * ABLATION_VARIANTS.len());
    for &(k, p) in grid {
        for (name, selective, striped) in ABLATION_VARIANTS {
            let params = BuildParams {
                k,
                p,
                selective_update: selective,
                segmented_locks: striped,
                ..base.clone()
            };
            let t0 = Instant::now();
            let (graph, report) = construct(data, metric, &params)?;
            let total_secs = t0.elapsed().as_secs_f64();
            let recall_at_10 = match truth {
                Some(t) if k >= 10 && t.k() >= 10 => Some(recall_at_k(&graph, t, 10)?),
                _ => None,
            };
            rows.push(BenchRow {
                variant: name,
                n: data.len(),
                d: data.dim(),
                k,
                p,
                iters: report.iters.len(),
                total_secs,
                recall_at_10,
                phi: graph.phi(),
                dist_evals: report.dist_evals(),
                report,
            });
        }
    }
    Ok(BenchSummary { rows })
}
