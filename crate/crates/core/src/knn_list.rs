//! Bounded k-NN lists split into independently locked segments.
//!
//! A list holds `k` slots grouped into `s` segments. An entry with neighbor
//! id `v` may only live in segment `v % s`, each segment is kept sorted
//! ascending by `(dist, id)`, and unused slots hold sentinels that sort last.
//! Inserts lock one segment, so concurrent inserts into distinct segments of
//! the same list proceed in parallel. Segmentation makes insertion a lossy
//! approximation: a candidate is accepted only if it beats the maximum of its
//! own segment, even when it would beat entries elsewhere in the list.

use std::cmp::Ordering;

use parking_lot::Mutex;

use crate::neighbor::NeighborEntry;

/// Result of offering a candidate to a list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    /// Candidate was placed; the farthest entry of its segment was evicted.
    Inserted,
    /// Candidate did not beat the maximum of its target segment.
    Rejected,
    /// Candidate id is already present.
    Duplicate,
}

pub struct SegmentedKnnList {
    k: usize,
    segments: Vec<Mutex<Vec<NeighborEntry>>>,
}

fn segment_count(k: usize, seg_size: usize) -> usize {
    debug_assert!(k >= 1 && seg_size >= 1);
    k.div_ceil(seg_size)
}

impl SegmentedKnnList {
    /// A list of `k` sentinel slots laid out as `ceil(k / seg_size)` segments
    /// of `seg_size` slots each (the last may be smaller).
    pub fn new(k: usize, seg_size: usize) -> Self {
        let s = segment_count(k, seg_size);
        let segments = (0..s)
            .map(|j| {
                let len = if j + 1 == s { k - (s - 1) * seg_size } else { seg_size };
                Mutex::new(vec![NeighborEntry::sentinel(); len])
            })
            .collect();
        SegmentedKnnList { k, segments }
    }

    /// Builds a list from up to `k` entries with distinct ids. Entries are
    /// routed to their modulus segment; leftover slots become sentinels
    /// distributed round-robin so every segment can still grow.
    pub fn from_entries(k: usize, seg_size: usize, entries: Vec<NeighborEntry>) -> Self {
        debug_assert!(entries.len() <= k);
        let s = segment_count(k, seg_size);
        let mut groups: Vec<Vec<NeighborEntry>> = vec![Vec::new(); s];
        for e in entries {
            debug_assert!(!e.is_sentinel());
            groups[(e.id as usize) % s].push(e);
        }
        let filled: usize = groups.iter().map(|g| g.len()).sum();
        for t in 0..k - filled {
            groups[t % s].push(NeighborEntry::sentinel());
        }
        for g in &mut groups {
            g.sort_unstable_by(NeighborEntry::cmp_dist_id);
        }
        SegmentedKnnList {
            k,
            segments: groups.into_iter().map(Mutex::new).collect(),
        }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Offers a candidate. The candidate goes to segment `id % s`; it is
    /// placed iff its id is absent and it compares below the segment's
    /// current maximum, evicting that maximum. The modulus placement rule
    /// means an id can only ever live in its target segment, so the duplicate
    /// scan covers exactly that segment.
    pub fn insert(&self, cand: NeighborEntry) -> InsertOutcome {
        debug_assert!(!cand.is_sentinel());
        let s = self.segments.len();
        let mut seg = self.segments[(cand.id as usize) % s].lock();
        if seg.iter().any(|e| e.id == cand.id) {
            return InsertOutcome::Duplicate;
        }
        let Some(last) = seg.last() else {
            return InsertOutcome::Rejected;
        };
        if cand.cmp_dist_id(last) != Ordering::Less {
            return InsertOutcome::Rejected;
        }
        let pos = seg.partition_point(|e| e.cmp_dist_id(&cand) == Ordering::Less);
        seg.pop();
        seg.insert(pos, cand);
        InsertOutcome::Inserted
    }

    /// Merges all segments into one globally sorted list, dissolving
    /// segmentation. Requires exclusive access.
    pub fn finalize(&mut self) {
        let mut all: Vec<NeighborEntry> = Vec::with_capacity(self.k);
        for seg in &mut self.segments {
            all.append(seg.get_mut());
        }
        all.sort_unstable_by(NeighborEntry::cmp_dist_id);
        self.segments = vec![Mutex::new(all)];
    }

    /// Rebuilds the segment layout for a new round of inserts: entries are
    /// grouped by `id % s` (each group stays sorted), sentinels pad the tail.
    pub fn resegment(&mut self, seg_size: usize) {
        let mut all: Vec<NeighborEntry> = Vec::with_capacity(self.k);
        for seg in &mut self.segments {
            all.append(seg.get_mut());
        }
        all.sort_unstable_by(NeighborEntry::cmp_dist_id);
        let reals: Vec<NeighborEntry> = all.into_iter().filter(|e| !e.is_sentinel()).collect();
        *self = SegmentedKnnList::from_entries(self.k, seg_size, reals);
    }

    /// Entries in storage order: segment 0 first, each segment sorted.
    pub fn snapshot(&self) -> Vec<NeighborEntry> {
        let mut out = Vec::with_capacity(self.k);
        for seg in &self.segments {
            out.extend_from_slice(&seg.lock());
        }
        out
    }

    /// Visits entries in storage order until the callback returns `false`.
    pub fn scan<F: FnMut(&NeighborEntry) -> bool>(&self, mut f: F) {
        for seg in &self.segments {
            for e in seg.lock().iter() {
                if !f(e) {
                    return;
                }
            }
        }
    }

    /// Flags every entry whose id appears in `ids` (sorted ascending) as old.
    pub fn mark_old(&self, ids: &[u32]) {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        for seg in &self.segments {
            let mut seg = seg.lock();
            for e in seg.iter_mut() {
                if !e.is_sentinel() && ids.binary_search(&e.id).is_ok() {
                    e.flag = crate::neighbor::Flag::Old;
                }
            }
        }
    }

    /// Sum of non-sentinel distances, accumulated into `acc`.
    pub(crate) fn add_distances(&self, acc: &mut crate::util::KahanSum) {
        for seg in &self.segments {
            for e in seg.lock().iter() {
                if !e.is_sentinel() {
                    acc.add(e.dist as f64);
                }
            }
        }
    }

    /// Clone of one segment's slots, for inspection in tests.
    pub fn segment_entries(&self, j: usize) -> Vec<NeighborEntry> {
        self.segments[j].lock().clone()
    }
}
