//! Graph update: turning one iteration's local joins into list insertions.
//!
//! Selection depends only on the sampled lists and the distance tables, never
//! on current list contents, and bounded-list insertion commutes. The final
//! graph state of an iteration is therefore independent of chunking, thread
//! count, and insertion order.

use std::time::Instant;

use rayon::prelude::*;

use super::join::{local_join_counted, nearest_object_by, JoinCounters};
use super::sample::SampleLists;
use super::BuildParams;
use crate::dataset::Dataset;
use crate::graph::WorkGraph;
use crate::knn_list::InsertOutcome;
use crate::metric::MetricKind;
use crate::neighbor::NeighborEntry;

/// Candidate insertion: `cand` offered to the list of `target`.
struct Offer {
    target: u32,
    cand: u32,
    dist: f32,
}

pub(crate) struct StepOutcome {
    pub join_secs: f64,
    pub apply_secs: f64,
    pub evals: u64,
    pub same_subset_evals: u64,
    pub inserts: u64,
}

/// Selects offers from one object's join results.
///
/// Selective mode inserts, per new sample, its nearest other new sample and
/// its nearest old sample, and per old sample its nearest new sample. Full
/// mode offers every computed pair to both endpoint lists.
fn select_offers(
    table: &super::join::DistanceTable,
    new_ids: &[u32],
    old_ids: &[u32],
    selective: bool,
    out: &mut Vec<Offer>,
) {
    let (m, q) = (table.m, table.q);
    if selective {
        for u in 0..m {
            let nearest_new = nearest_object_by(new_ids, |v| {
                if v == u {
                    f32::INFINITY
                } else {
                    table.new_new(u, v)
                }
            });
            if let Some((id, dist)) = nearest_new {
                out.push(Offer {
                    target: new_ids[u],
                    cand: id,
                    dist,
                });
            }
            if let Some((id, dist)) = nearest_object_by(old_ids, |j| table.new_old(u, j)) {
                out.push(Offer {
                    target: new_ids[u],
                    cand: id,
                    dist,
                });
            }
        }
        for j in 0..q {
            if let Some((id, dist)) = nearest_object_by(new_ids, |u| table.new_old(u, j)) {
                out.push(Offer {
                    target: old_ids[j],
                    cand: id,
                    dist,
                });
            }
        }
    } else {
        for u in 1..m {
            for v in 0..u {
                let dist = table.new_new(u, v);
                if dist.is_finite() {
                    out.push(Offer {
                        target: new_ids[u],
                        cand: new_ids[v],
                        dist,
                    });
                    out.push(Offer {
                        target: new_ids[v],
                        cand: new_ids[u],
                        dist,
                    });
                }
            }
        }
        for u in 0..m {
            for j in 0..q {
                let dist = table.new_old(u, j);
                if dist.is_finite() {
                    out.push(Offer {
                        target: new_ids[u],
                        cand: old_ids[j],
                        dist,
                    });
                    out.push(Offer {
                        target: old_ids[j],
                        cand: new_ids[u],
                        dist,
                    });
                }
            }
        }
    }
}

// Objects per processing chunk; bounds the resident offer buffers while
// keeping the join and apply phases separately timeable.
const CHUNK: usize = 1024;

/// Runs every object's local join and applies the selected insertions.
/// Inserted entries are flagged new; returns counts and phase timings.
pub(crate) fn update_step(
    work: &WorkGraph,
    data: &Dataset,
    metric: MetricKind,
    samples: &SampleLists,
    params: &BuildParams,
    boundary: Option<u32>,
) -> StepOutcome {
    let n = work.len();
    let mut outcome = StepOutcome {
        join_secs: 0.0,
        apply_secs: 0.0,
        evals: 0,
        same_subset_evals: 0,
        inserts: 0,
    };

    let join_one = |s: usize| -> (Vec<Offer>, u64, u64) {
        let new_ids = &samples.new_ids[s];
        let old_ids = &samples.old_ids[s];
        if new_ids.is_empty() {
            return (Vec::new(), 0, 0);
        }
        let mut counters = JoinCounters {
            evals: 0,
            same_subset_evals: 0,
        };
        let table = local_join_counted(data, metric, new_ids, old_ids, boundary, &mut counters);
        let mut offers = Vec::new();
        select_offers(
            &table,
            new_ids,
            old_ids,
            params.selective_update,
            &mut offers,
        );
        (offers, counters.evals, counters.same_subset_evals)
    };

    let apply_one = |offers: &[Offer]| -> u64 {
        let mut inserted = 0;
        for o in offers {
            debug_assert_ne!(o.target, o.cand);
            let entry = NeighborEntry::new(o.cand, o.dist);
            if work.list(o.target as usize).insert(entry) == InsertOutcome::Inserted {
                inserted += 1;
            }
        }
        inserted
    };

    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);

        let t0 = Instant::now();
        let chunk: Vec<(Vec<Offer>, u64, u64)> = if params.deterministic {
            (start..end).map(join_one).collect()
        } else {
            (start..end).into_par_iter().map(join_one).collect()
        };
        outcome.join_secs += t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let inserted: u64 = if params.deterministic {
            chunk.iter().map(|(offers, _, _)| apply_one(offers)).sum()
        } else {
            chunk
                .par_iter()
                .map(|(offers, _, _)| apply_one(offers))
                .sum()
        };
        outcome.apply_secs += t1.elapsed().as_secs_f64();

        outcome.inserts += inserted;
        for (_, evals, same_subset) in &chunk {
            outcome.evals += evals;
            outcome.same_subset_evals += same_subset;
        }
        start = end;
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{init_random_graph, parallel_sample};
    use crate::eval;
    use crate::knn_list::SegmentedKnnList;
    use crate::neighbor::{cmp_dist_id, Flag};
    use std::collections::BTreeMap;

    fn tiny_graph(lists: Vec<Vec<NeighborEntry>>, k: usize) -> WorkGraph {
        WorkGraph::from_lists(
            k,
            lists
                .into_iter()
                .map(|l| SegmentedKnnList::from_entries(k, k, l))
                .collect(),
        )
    }

    #[test]
    fn smallest_join_offers_both_directions() {
        // Objects 2 and 3 are each other's samples through object 0's local.
        let data = eval::uniform_dataset(4, 2, 5, 0.0, 1.0);
        let work = tiny_graph(
            vec![
                vec![NeighborEntry::new(2, 0.4), NeighborEntry::new(3, 0.5)],
                vec![NeighborEntry::old(0, 0.4), NeighborEntry::old(2, 0.5)],
                vec![NeighborEntry::old(0, 0.4), NeighborEntry::old(1, 0.5)],
                vec![NeighborEntry::old(0, 0.4), NeighborEntry::old(1, 0.5)],
            ],
            2,
        );
        let mut samples = parallel_sample(&work, 1, true);
        // Restrict to one local join: new samples {2, 3} of object 0.
        for (i, list) in samples.new_ids.iter_mut().enumerate() {
            if i != 0 {
                list.clear();
            }
        }
        samples.new_ids[0] = vec![2, 3];
        samples.old_ids.iter_mut().for_each(|l| l.clear());

        let params = BuildParams {
            k: 2,
            p: 1,
            deterministic: true,
            ..BuildParams::default()
        };
        let metric = MetricKind::SquaredEuclidean;
        let step = update_step(&work, &data, metric, &samples, &params, None);
        assert!(step.inserts <= 2);
        let d23 = metric.eval(data.row(2), data.row(3));
        let in_2 = work.list(2).snapshot().iter().any(|e| e.id == 3);
        let in_3 = work.list(3).snapshot().iter().any(|e| e.id == 2);
        // Each side accepted the candidate iff it beat that list's maximum.
        assert_eq!(in_2, d23 < 0.5);
        assert_eq!(in_3, d23 < 0.5);
    }

    #[test]
    fn duplicate_offers_are_not_counted() {
        let data = eval::uniform_dataset(4, 2, 8, 0.0, 1.0);
        let metric = MetricKind::SquaredEuclidean;
        let d23 = metric.eval(data.row(2), data.row(3));
        // Object 2 already lists object 3.
        let work = tiny_graph(
            vec![
                vec![NeighborEntry::new(2, 0.4), NeighborEntry::new(3, 0.5)],
                vec![NeighborEntry::old(0, 0.4), NeighborEntry::old(2, 0.5)],
                vec![NeighborEntry::old(3, d23), NeighborEntry::old(0, 9.0)],
                vec![NeighborEntry::old(2, d23), NeighborEntry::old(0, 9.0)],
            ],
            2,
        );
        let mut samples = parallel_sample(&work, 1, true);
        samples.new_ids.iter_mut().for_each(|l| l.clear());
        samples.old_ids.iter_mut().for_each(|l| l.clear());
        samples.new_ids[0] = vec![2, 3];

        let params = BuildParams {
            k: 2,
            p: 1,
            deterministic: true,
            ..BuildParams::default()
        };
        let step = update_step(&work, &data, metric, &samples, &params, None);
        assert_eq!(step.inserts, 0);
    }

    /// One unrestricted full-update iteration on single-segment lists must
    /// match a scalar reference: each list ends as the k smallest distinct
    /// candidates among its initial entries and everything offered to it.
    #[test]
    fn full_update_matches_scalar_reference_iteration() {
        let n = 60;
        let data = eval::uniform_dataset(n, 3, 17, 0.0, 1.0);
        let metric = MetricKind::SquaredEuclidean;
        let params = BuildParams {
            k: 5,
            p: 3,
            max_iter: 1,
            seed: 4,
            selective_update: false,
            segmented_locks: false,
            deterministic: true,
            ..BuildParams::default()
        };
        let work = init_random_graph(&data, metric, &params).unwrap();
        let samples = parallel_sample(&work, params.p, true);

        // Scalar reference: gather every offer, then bounded-insert per list.
        let mut offered: BTreeMap<u32, Vec<(f32, u32)>> = BTreeMap::new();
        for s in 0..n {
            let new_ids = &samples.new_ids[s];
            let old_ids = &samples.old_ids[s];
            for i in 0..new_ids.len() {
                for j in 0..i {
                    let (a, b) = (new_ids[i], new_ids[j]);
                    let d = metric.eval(data.row(a as usize), data.row(b as usize));
                    offered.entry(a).or_default().push((d, b));
                    offered.entry(b).or_default().push((d, a));
                }
                for &o in old_ids.iter() {
                    let (a, b) = (new_ids[i], o);
                    if a == b {
                        continue;
                    }
                    let d = metric.eval(data.row(a as usize), data.row(b as usize));
                    offered.entry(a).or_default().push((d, b));
                    offered.entry(b).or_default().push((d, a));
                }
            }
        }
        let mut want: Vec<Vec<(f32, u32)>> = (0..n)
            .map(|i| {
                let mut pool: Vec<(f32, u32)> = work
                    .list(i)
                    .snapshot()
                    .iter()
                    .map(|e| (e.dist, e.id))
                    .collect();
                pool.extend(offered.remove(&(i as u32)).unwrap_or_default());
                pool.sort_by(|a, b| cmp_dist_id((a.0, a.1), (b.0, b.1)));
                let mut seen = std::collections::HashSet::new();
                pool.retain(|e| seen.insert(e.1));
                pool.truncate(params.k);
                pool
            })
            .collect();

        update_step(&work, &data, metric, &samples, &params, None);

        for i in 0..n {
            let got: Vec<(f32, u32)> = work
                .list(i)
                .snapshot()
                .iter()
                .map(|e| (e.dist, e.id))
                .collect();
            let mut got_sorted = got.clone();
            got_sorted.sort_by(|a, b| cmp_dist_id((a.0, a.1), (b.0, b.1)));
            assert_eq!(got_sorted, std::mem::take(&mut want[i]), "list {i}");
        }
    }

    #[test]
    fn inserted_entries_are_flagged_new_until_sampled() {
        let data = eval::uniform_dataset(80, 3, 2, 0.0, 1.0);
        let metric = MetricKind::SquaredEuclidean;
        let params = BuildParams {
            k: 4,
            p: 2,
            max_iter: 1,
            deterministic: true,
            ..BuildParams::default()
        };
        let mut work = init_random_graph(&data, metric, &params).unwrap();
        let samples = parallel_sample(&work, params.p, true);
        update_step(&work, &data, metric, &samples, &params, None);
        work.mark_sampled_old_and_finalize(&samples.sampled_new);
        for i in 0..work.len() {
            for e in work.list(i).snapshot() {
                let was_sampled = samples.sampled_new[i].binary_search(&e.id).is_ok();
                if was_sampled {
                    assert_eq!(e.flag, Flag::Old);
                }
            }
        }
    }
}
