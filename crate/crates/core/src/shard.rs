//! Out-of-core construction: partition a dataset into shards, build each
//! sub-graph in memory, then merge every shard pair so each list converges to
//! its global top-k while only two shards of vectors are ever resident.
//!
//! All progress is tracked on disk. Sub-graph files exist only once fully
//! written (temp file + rename), and each completed pair merge leaves a
//! `merge_<i>_<j>.done` marker created with exclusive semantics, so
//! interrupted runs resume and independent workers never repeat a pair.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::builder::{construct, BuildParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::KnnGraph;
use crate::io::{read_graph, write_fvecs, write_graph, VecsKind, VecsReader};
use crate::merge::{init_from_lists, merge_finalize, merge_refine};
use crate::metric::MetricKind;
use crate::neighbor::{Flag, NeighborEntry};
use crate::util::mix_seed;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardInfo {
    pub index: u32,
    /// Global id interval `[lo, hi)` owned by this shard.
    pub range: (u64, u64),
    pub vec_file: String,
    pub graph_file: String,
}

impl ShardInfo {
    pub fn len(&self) -> usize {
        (self.range.1 - self.range.0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.range.0 == self.range.1
    }
}

/// On-disk description of a sharded build: shard files, the pairwise merge
/// schedule, and which pairs completed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardManifest {
    pub version: u32,
    pub n: u64,
    pub d: u32,
    pub k: u32,
    pub metric: MetricKind,
    pub shard_size: u64,
    pub shards: Vec<ShardInfo>,
    pub schedule: Vec<(u32, u32)>,
    pub done: Vec<(u32, u32)>,
}

impl ShardManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| Error::usage(format!("manifest serialization failed: {e}")))?;
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, dir.join(MANIFEST_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let body = std::fs::read_to_string(&path)?;
        let manifest: ShardManifest = serde_json::from_str(&body)
            .map_err(|e| Error::format_in(&path, 0, format!("bad manifest: {e}")))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::format_in(
                &path,
                0,
                format!("unsupported manifest version {}", manifest.version),
            ));
        }
        Ok(manifest)
    }

    pub fn vec_path(&self, dir: &Path, shard: u32) -> PathBuf {
        dir.join(&self.shards[shard as usize].vec_file)
    }

    pub fn graph_path(&self, dir: &Path, shard: u32) -> PathBuf {
        dir.join(&self.shards[shard as usize].graph_file)
    }

    fn marker_path(dir: &Path, pair: (u32, u32)) -> PathBuf {
        dir.join(format!("merge_{}_{}.done", pair.0, pair.1))
    }

    fn claim_path(dir: &Path, pair: (u32, u32)) -> PathBuf {
        dir.join(format!("merge_{}_{}.claim", pair.0, pair.1))
    }

    /// Rebuilds `done` from the marker files, the on-disk source of truth.
    pub fn reconcile_done(&mut self, dir: &Path) {
        self.done = self
            .schedule
            .iter()
            .copied()
            .filter(|p| Self::marker_path(dir, *p).exists())
            .collect();
    }

    /// A shard's graph file holds global ids once any merge has touched it;
    /// before that it is in shard-local id space.
    pub fn ids_are_global(&self, shard: u32) -> bool {
        self.done.iter().any(|&(a, b)| a == shard || b == shard)
    }
}

fn shard_build_seed(base: u64, shard: u32) -> u64 {
    mix_seed(mix_seed(base, 0x5348_4152_44), shard as u64)
}

/// Seed used for the merge of one shard pair; exposed so an in-memory merge
/// can reproduce a pipeline step exactly.
pub fn pair_seed(base: u64, i: u32, j: u32) -> u64 {
    mix_seed(mix_seed(base, 0x5041_4952), ((i as u64) << 32) | j as u64)
}

/// Splits the input into shard vector files of `shard_size` rows (the last
/// may be smaller but must still exceed `k`) and records the merge schedule:
/// every unordered shard pair exactly once, lexicographic order.
pub fn partition(
    input: &Path,
    kind: VecsKind,
    dir: &Path,
    shard_size: usize,
    k: usize,
    metric: MetricKind,
) -> Result<ShardManifest> {
    if shard_size <= k {
        return Err(Error::usage(format!(
            "shard size {shard_size} must exceed k={k}"
        )));
    }
    std::fs::create_dir_all(dir)?;

    let mut reader = VecsReader::open(input, kind)?;
    let mut shards: Vec<ShardInfo> = Vec::new();
    let mut buf: Vec<Vec<f32>> = Vec::with_capacity(shard_size);
    let mut total = 0u64;

    fn flush(
        dir: &Path,
        buf: &mut Vec<Vec<f32>>,
        shards: &mut Vec<ShardInfo>,
        total: u64,
    ) -> Result<()> {
        let index = shards.len() as u32;
        let info = ShardInfo {
            index,
            range: (total - buf.len() as u64, total),
            vec_file: format!("shard_{index:04}.fvecs"),
            graph_file: format!("shard_{index:04}.knng"),
        };
        write_fvecs(&dir.join(&info.vec_file), buf.iter().map(|r| r.as_slice()))?;
        shards.push(info);
        buf.clear();
        Ok(())
    }

    while let Some(row) = reader.next().transpose()? {
        buf.push(row);
        total += 1;
        if buf.len() == shard_size {
            flush(dir, &mut buf, &mut shards, total)?;
        }
    }
    if !buf.is_empty() {
        if buf.len() <= k {
            return Err(Error::usage(format!(
                "final shard would hold {} objects, need more than k={k}; \
                 choose a different shard size",
                buf.len()
            )));
        }
        flush(dir, &mut buf, &mut shards, total)?;
    }
    if shards.is_empty() {
        return Err(Error::format_in(input, 0, "input holds no vectors"));
    }
    let d = reader.dim().unwrap() as u32;

    let mut schedule = Vec::new();
    for i in 0..shards.len() as u32 {
        for j in i + 1..shards.len() as u32 {
            schedule.push((i, j));
        }
    }

    let manifest = ShardManifest {
        version: MANIFEST_VERSION,
        n: total,
        d,
        k: k as u32,
        metric,
        shard_size: shard_size as u64,
        shards,
        schedule,
        done: Vec::new(),
    };
    manifest.save(dir)?;
    Ok(manifest)
}

/// Builds the sub-graph of every shard that does not have one yet. Graph
/// files appear atomically, so an interrupted run resumes where it stopped.
pub fn build_shards(manifest: &ShardManifest, dir: &Path, params: &BuildParams) -> Result<()> {
    if params.k != manifest.k as usize {
        return Err(Error::usage(format!(
            "params request k={} but the manifest was partitioned for k={}",
            params.k, manifest.k
        )));
    }
    for shard in &manifest.shards {
        let graph_path = dir.join(&shard.graph_file);
        if graph_path.exists() {
            continue;
        }
        let data = crate::io::read_vecs(&dir.join(&shard.vec_file), VecsKind::Fvecs)?;
        let mut shard_params = params.clone();
        shard_params.seed = shard_build_seed(params.seed, shard.index);
        let (graph, _) = construct(&data, manifest.metric, &shard_params)?;
        write_graph_atomic(&graph, &graph_path)?;
    }
    Ok(())
}

/// One step of the execution plan: the pair to merge and which shard files
/// the next step needs beyond the current one (the prefetch hint).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanStep {
    pub pair: (u32, u32),
    pub prefetch: Vec<u32>,
}

/// Lays the schedule out as a total order with prefetch hints: consecutive
/// steps share at most one shard, so the hint names the single file that can
/// be fetched while the current step computes.
pub fn pipeline_schedule(manifest: &ShardManifest) -> Vec<PlanStep> {
    let pairs = &manifest.schedule;
    pairs
        .iter()
        .enumerate()
        .map(|(t, &pair)| {
            let prefetch = match pairs.get(t + 1) {
                Some(&(a, b)) => [a, b]
                    .into_iter()
                    .filter(|s| *s != pair.0 && *s != pair.1)
                    .collect(),
                None => Vec::new(),
            };
            PlanStep { pair, prefetch }
        })
        .collect()
}

/// Runs every pending pair merge of the schedule. Returns the number of
/// pairs still pending afterwards (pairs claimed by other workers). With
/// `clear_stale_claims`, leftover claims from an interrupted run are removed
/// first so the pairs become runnable again.
pub fn merge_all(
    manifest: &mut ShardManifest,
    dir: &Path,
    params: &BuildParams,
    clear_stale_claims: bool,
) -> Result<usize> {
    manifest.reconcile_done(dir);
    if clear_stale_claims {
        for &pair in &manifest.schedule {
            let claim = ShardManifest::claim_path(dir, pair);
            if claim.exists() && !ShardManifest::marker_path(dir, pair).exists() {
                std::fs::remove_file(&claim)?;
            }
        }
    }

    let plan = pipeline_schedule(manifest);
    for step in &plan {
        let pair = step.pair;
        if manifest.done.contains(&pair) {
            continue;
        }
        // Exclusive claim; losing the race means another worker owns it.
        match OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(ShardManifest::claim_path(dir, pair))
        {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }

        merge_pair(manifest, dir, params, pair)?;

        File::create(ShardManifest::marker_path(dir, pair))?;
        let _ = std::fs::remove_file(ShardManifest::claim_path(dir, pair));
        manifest.done.push(pair);
        manifest.save(dir)?;
    }

    manifest.reconcile_done(dir);
    Ok(manifest.schedule.len() - manifest.done.len())
}

/// Merges one shard pair: loads both shard vectors and sub-graphs, refines
/// cross links over the union, and writes the result back as two sub-graph
/// files, each list keeping its top-k over everything merged so far.
fn merge_pair(
    manifest: &ShardManifest,
    dir: &Path,
    params: &BuildParams,
    pair: (u32, u32),
) -> Result<()> {
    let (i, j) = pair;
    let (lo_i, _) = manifest.shards[i as usize].range;
    let (lo_j, _) = manifest.shards[j as usize].range;
    let n_i = manifest.shards[i as usize].len();
    let n_j = manifest.shards[j as usize].len();

    // Exactly the two shards' vectors are read, straight into one buffer.
    let mut combined = Vec::with_capacity((n_i + n_j) * manifest.d as usize);
    for shard in [i, j] {
        let mut reader = VecsReader::open(&manifest.vec_path(dir, shard), VecsKind::Fvecs)?;
        while let Some(row) = reader.next().transpose()? {
            combined.extend_from_slice(&row);
        }
    }
    let data = Dataset::new(manifest.d as usize, combined)?;

    let to_global = |local: u32| -> u32 {
        if (local as usize) < n_i {
            lo_i as u32 + local
        } else {
            lo_j as u32 + (local as usize - n_i) as u32
        }
    };

    // Load both sub-graphs and split every list into pair members (mapped to
    // the pair-local id space) and foreign entries from shards merged
    // earlier, which cannot be re-evaluated now and are set aside verbatim.
    let mut lists: Vec<Vec<NeighborEntry>> = Vec::with_capacity(n_i + n_j);
    let mut foreign: Vec<Vec<NeighborEntry>> = Vec::with_capacity(n_i + n_j);
    for shard in [i, j] {
        let graph = read_graph(&manifest.graph_path(dir, shard))?;
        let info = &manifest.shards[shard as usize];
        if graph.len() != info.len() || graph.k() != manifest.k as usize {
            return Err(Error::usage(format!(
                "sub-graph of shard {shard} does not match the manifest"
            )));
        }
        let global = manifest.ids_are_global(shard);
        let base = info.range.0 as u32;
        for row in 0..graph.len() {
            let mut pair_local = Vec::new();
            let mut kept_out = Vec::new();
            for mut e in graph.list_entries(row, Flag::Old) {
                if !global {
                    e.id += base;
                }
                let id = e.id as u64;
                if (lo_i..lo_i + n_i as u64).contains(&id) {
                    e.id = (id - lo_i) as u32;
                    pair_local.push(e);
                } else if (lo_j..lo_j + n_j as u64).contains(&id) {
                    e.id = (n_i as u64 + (id - lo_j)) as u32;
                    pair_local.push(e);
                } else {
                    kept_out.push(e);
                }
            }
            // Re-basing changes id tie-breaks; restore (dist, id) order.
            pair_local.sort_unstable_by(NeighborEntry::cmp_dist_id);
            lists.push(pair_local);
            foreign.push(kept_out);
        }
    }

    let mut pair_params = params.clone();
    pair_params.k = manifest.k as usize;
    pair_params.seed = pair_seed(params.seed, i, j);
    let (mut work, ctx, _) =
        init_from_lists(lists, n_i as u32, &data, manifest.metric, &pair_params)?;
    merge_refine(&mut work, &ctx, &data, manifest.metric, &pair_params);
    let merged = merge_finalize(work, &ctx, manifest.metric);

    // Back to global ids, folding the foreign entries in; each list is again
    // the k smallest over everything this object has ever seen.
    let k = manifest.k as usize;
    let rows: Vec<Vec<(u32, f32)>> = (0..merged.len())
        .map(|row| {
            let mut pool: Vec<NeighborEntry> = merged
                .neighbors(row)
                .map(|(id, dist)| NeighborEntry::old(to_global(id), dist))
                .collect();
            pool.extend_from_slice(&foreign[row]);
            pool.sort_unstable_by(NeighborEntry::cmp_dist_id);
            pool.dedup_by_key(|e| e.id);
            pool.truncate(k);
            pool.into_iter().map(|e| (e.id, e.dist)).collect()
        })
        .collect();

    let graph_i = KnnGraph::from_lists(manifest.metric, k, rows[..n_i].to_vec())?;
    let graph_j = KnnGraph::from_lists(manifest.metric, k, rows[n_i..].to_vec())?;
    write_graph_atomic(&graph_i, &manifest.graph_path(dir, i))?;
    write_graph_atomic(&graph_j, &manifest.graph_path(dir, j))?;
    Ok(())
}

fn write_graph_atomic(graph: &KnnGraph, path: &Path) -> Result<()> {
    let tmp = path.with_extension("knng.tmp");
    write_graph(graph, &tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Concatenates the shard sub-graphs, re-based to global ids, into the final
/// whole-dataset graph. Requires the schedule to be complete.
pub fn export_graph(manifest: &ShardManifest, dir: &Path) -> Result<KnnGraph> {
    let pending: Vec<_> = manifest
        .schedule
        .iter()
        .filter(|p| !manifest.done.contains(p))
        .collect();
    if !pending.is_empty() {
        return Err(Error::usage(format!(
            "{} merge pairs still pending; finish the schedule before exporting",
            pending.len()
        )));
    }
    let mut ids = Vec::with_capacity(manifest.n as usize * manifest.k as usize);
    let mut dists = Vec::with_capacity(manifest.n as usize * manifest.k as usize);
    for shard in &manifest.shards {
        let graph = read_graph(&dir.join(&shard.graph_file))?;
        if graph.len() != shard.len() || graph.k() != manifest.k as usize {
            return Err(Error::usage(format!(
                "sub-graph of shard {} does not match the manifest",
                shard.index
            )));
        }
        let global = manifest.ids_are_global(shard.index);
        let base = shard.range.0 as u32;
        for row in 0..graph.len() {
            for (id, dist) in graph.neighbors(row) {
                ids.push(if global { id } else { id + base });
                dists.push(dist);
            }
        }
    }
    KnnGraph::from_parts(
        manifest.n as usize,
        manifest.k as usize,
        manifest.metric,
        ids,
        dists,
    )
}

/// Adds a new batch of vectors as one extra shard and schedules its merge
/// against every existing shard. Re-running [`build_shards`] and
/// [`merge_all`] afterwards builds the new sub-graph and performs exactly the
/// new pairs; completed work is untouched.
pub fn append_batch(
    manifest: &mut ShardManifest,
    dir: &Path,
    input: &Path,
    kind: VecsKind,
) -> Result<u32> {
    let mut reader = VecsReader::open(input, kind)?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    while let Some(row) = reader.next().transpose()? {
        rows.push(row);
    }
    if rows.len() <= manifest.k as usize {
        return Err(Error::usage(format!(
            "batch holds {} objects, need more than k={}",
            rows.len(),
            manifest.k
        )));
    }
    if reader.dim() != Some(manifest.d as usize) {
        return Err(Error::usage(format!(
            "batch dimension {:?} does not match dataset dimension {}",
            reader.dim(),
            manifest.d
        )));
    }
    let index = manifest.shards.len() as u32;
    let info = ShardInfo {
        index,
        range: (manifest.n, manifest.n + rows.len() as u64),
        vec_file: format!("shard_{index:04}.fvecs"),
        graph_file: format!("shard_{index:04}.knng"),
    };
    write_fvecs(&dir.join(&info.vec_file), rows.iter().map(|r| r.as_slice()))?;
    manifest.n += rows.len() as u64;
    manifest.shards.push(info);
    for i in 0..index {
        manifest.schedule.push((i, index));
    }
    manifest.save(dir)?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::uniform_dataset;
    use std::collections::BTreeSet;

    fn write_input(dir: &Path, n: usize, d: usize, seed: u64) -> PathBuf {
        let data = uniform_dataset(n, d, seed, 0.0, 1.0);
        let path = dir.join("input.fvecs");
        write_fvecs(&path, data.rows()).unwrap();
        path
    }

    #[test]
    fn partition_examples() {
        let tmp = tempfile::tempdir().unwrap();
        let input = write_input(tmp.path(), 2000, 4, 1);
        let dir = tmp.path().join("work");
        let m = partition(
            &input,
            VecsKind::Fvecs,
            &dir,
            500,
            10,
            MetricKind::SquaredEuclidean,
        )
        .unwrap();
        assert_eq!(m.shards.len(), 4);
        let ranges: Vec<(u64, u64)> = m.shards.iter().map(|s| s.range).collect();
        assert_eq!(ranges, vec![(0, 500), (500, 1000), (1000, 1500), (1500, 2000)]);
        assert_eq!(m.schedule.len(), 6);

        // A trailing shard of one object cannot exceed k.
        let input2 = write_input(tmp.path(), 2001, 4, 2);
        assert!(partition(
            &input2,
            VecsKind::Fvecs,
            &tmp.path().join("work2"),
            500,
            10,
            MetricKind::SquaredEuclidean
        )
        .is_err());

        // shard_size must exceed k up front.
        assert!(partition(
            &input,
            VecsKind::Fvecs,
            &tmp.path().join("work3"),
            10,
            10,
            MetricKind::SquaredEuclidean
        )
        .is_err());
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let tmp = tempfile::tempdir().unwrap();
        let input = write_input(tmp.path(), 600, 3, 3);
        let dir = tmp.path().join("work");
        let mut m = partition(
            &input,
            VecsKind::Fvecs,
            &dir,
            300,
            8,
            MetricKind::Cosine,
        )
        .unwrap();
        m.done.push((0, 1));
        m.save(&dir).unwrap();
        let back = ShardManifest::load(&dir).unwrap();
        assert_eq!(back.n, 600);
        assert_eq!(back.metric, MetricKind::Cosine);
        assert_eq!(back.done, vec![(0, 1)]);
        assert_eq!(back.shards[1].range, (300, 600));
    }

    #[test]
    fn schedule_plan_is_valid_by_simulation() {
        let tmp = tempfile::tempdir().unwrap();
        let input = write_input(tmp.path(), 2000, 3, 4);
        let dir = tmp.path().join("work");
        let m = partition(
            &input,
            VecsKind::Fvecs,
            &dir,
            500,
            8,
            MetricKind::SquaredEuclidean,
        )
        .unwrap();
        let plan = pipeline_schedule(&m);

        // The plan is a permutation of the schedule.
        let planned: BTreeSet<(u32, u32)> = plan.iter().map(|s| s.pair).collect();
        let scheduled: BTreeSet<(u32, u32)> = m.schedule.iter().copied().collect();
        assert_eq!(planned, scheduled);
        assert_eq!(plan.len(), m.schedule.len());

        // Simulate: consecutive steps share at most one shard, and the
        // prefetch hint is exactly what the next step needs on top.
        for w in plan.windows(2) {
            let cur = [w[0].pair.0, w[0].pair.1];
            let next = [w[1].pair.0, w[1].pair.1];
            let shared = next.iter().filter(|s| cur.contains(s)).count();
            assert!(shared <= 1);
            let want: Vec<u32> = next.iter().copied().filter(|s| !cur.contains(s)).collect();
            assert_eq!(w[0].prefetch, want);
        }
        assert!(plan.last().unwrap().prefetch.is_empty());
    }

    #[test]
    fn build_shards_skips_completed_work() {
        let tmp = tempfile::tempdir().unwrap();
        let input = write_input(tmp.path(), 240, 3, 5);
        let dir = tmp.path().join("work");
        let m = partition(
            &input,
            VecsKind::Fvecs,
            &dir,
            120,
            6,
            MetricKind::SquaredEuclidean,
        )
        .unwrap();
        let params = BuildParams {
            k: 6,
            p: 3,
            max_iter: 2,
            deterministic: true,
            ..BuildParams::default()
        };
        build_shards(&m, &dir, &params).unwrap();
        let g0 = m.graph_path(&dir, 0);
        let first = std::fs::read(&g0).unwrap();
        // Local id space after the initial build.
        let graph = read_graph(&g0).unwrap();
        for row in 0..graph.len() {
            assert!(graph.list_ids(row).iter().all(|&id| (id as usize) < 120));
        }

        // A rerun rewrites nothing.
        std::fs::write(&g0, &first).unwrap();
        build_shards(&m, &dir, &params).unwrap();
        assert_eq!(std::fs::read(&g0).unwrap(), first);
    }

    #[test]
    fn merge_all_is_resumable_and_audited() {
        let tmp = tempfile::tempdir().unwrap();
        let input = write_input(tmp.path(), 360, 3, 6);
        let dir = tmp.path().join("work");
        let mut m = partition(
            &input,
            VecsKind::Fvecs,
            &dir,
            120,
            6,
            MetricKind::SquaredEuclidean,
        )
        .unwrap();
        let params = BuildParams {
            k: 6,
            p: 3,
            max_iter: 2,
            deterministic: true,
            ..BuildParams::default()
        };
        build_shards(&m, &dir, &params).unwrap();

        // Pretend another worker holds (0, 2): it must be left alone.
        File::create(ShardManifest::claim_path(&dir, (0, 2))).unwrap();
        let pending = merge_all(&mut m, &dir, &params, false).unwrap();
        assert_eq!(pending, 1);
        assert_eq!(m.done.len(), 2);

        // Resume clears the stale claim and finishes the schedule once.
        let pending = merge_all(&mut m, &dir, &params, true).unwrap();
        assert_eq!(pending, 0);
        let mut done = m.done.clone();
        done.sort_unstable();
        assert_eq!(done, m.schedule);

        // Every pair ran exactly once: markers exist, claims are gone.
        for &pair in &m.schedule {
            assert!(ShardManifest::marker_path(&dir, pair).exists());
            assert!(!ShardManifest::claim_path(&dir, pair).exists());
        }

        let graph = export_graph(&m, &dir).unwrap();
        assert_eq!(graph.len(), 360);
        // Lists may now point into any shard.
        let mut cross = 0;
        for row in 0..graph.len() {
            for (id, dist) in graph.neighbors(row) {
                assert!((id as usize) < 360);
                assert_ne!(id as usize, row);
                assert!(dist.is_finite());
                if (row < 120) != ((id as usize) < 120) {
                    cross += 1;
                }
            }
        }
        assert!(cross > 0);
    }

    #[test]
    fn export_refuses_incomplete_schedule() {
        let tmp = tempfile::tempdir().unwrap();
        let input = write_input(tmp.path(), 240, 3, 7);
        let dir = tmp.path().join("work");
        let m = partition(
            &input,
            VecsKind::Fvecs,
            &dir,
            120,
            6,
            MetricKind::SquaredEuclidean,
        )
        .unwrap();
        assert!(export_graph(&m, &dir).is_err());
    }

    #[test]
    fn append_batch_extends_schedule_pairwise() {
        let tmp = tempfile::tempdir().unwrap();
        let input = write_input(tmp.path(), 240, 3, 8);
        let dir = tmp.path().join("work");
        let mut m = partition(
            &input,
            VecsKind::Fvecs,
            &dir,
            120,
            6,
            MetricKind::SquaredEuclidean,
        )
        .unwrap();
        let batch = uniform_dataset(80, 3, 9, 0.0, 1.0);
        let batch_path = tmp.path().join("batch.fvecs");
        write_fvecs(&batch_path, batch.rows()).unwrap();

        let idx = append_batch(&mut m, &dir, &batch_path, VecsKind::Fvecs).unwrap();
        assert_eq!(idx, 2);
        assert_eq!(m.n, 320);
        assert_eq!(m.shards[2].range, (240, 320));
        // C(3, 2) pairs, each exactly once.
        assert_eq!(m.schedule.len(), 3);
        let set: BTreeSet<_> = m.schedule.iter().collect();
        assert_eq!(set.len(), 3);

        let reloaded = ShardManifest::load(&dir).unwrap();
        assert_eq!(reloaded.schedule, m.schedule);
    }
}
