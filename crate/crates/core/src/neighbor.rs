//! Neighbor list entries: the unit every k-NN list is made of.

use std::cmp::Ordering;

/// Id value reserved for sentinel (empty) slots.
pub const SENTINEL_ID: u32 = u32::MAX;

/// Marks whether a neighbor entered its list in the current iteration (`New`)
/// or survived from an earlier one (`Old`). New entries must be cross-matched;
/// old ones are compared only against new ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    New,
    Old,
}

/// One slot of a k-NN list: neighbor id, its distance to the list owner, and
/// the new/old flag. The sentinel `(SENTINEL_ID, +inf, New)` fills unused
/// slots and compares greater than any real entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborEntry {
    pub id: u32,
    pub dist: f32,
    pub flag: Flag,
}

impl NeighborEntry {
    #[inline]
    pub fn new(id: u32, dist: f32) -> Self {
        NeighborEntry {
            id,
            dist,
            flag: Flag::New,
        }
    }

    #[inline]
    pub fn old(id: u32, dist: f32) -> Self {
        NeighborEntry {
            id,
            dist,
            flag: Flag::Old,
        }
    }

    #[inline]
    pub const fn sentinel() -> Self {
        NeighborEntry {
            id: SENTINEL_ID,
            dist: f32::INFINITY,
            flag: Flag::New,
        }
    }

    #[inline]
    pub fn is_sentinel(&self) -> bool {
        self.id == SENTINEL_ID
    }

    #[inline]
    pub fn is_new(&self) -> bool {
        self.flag == Flag::New
    }

    /// Total order by `(dist, id)`. Distances are never NaN, so `total_cmp`
    /// agrees with the usual numeric order.
    #[inline]
    pub fn cmp_dist_id(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

/// `(dist, id)` comparison on raw pairs, matching [`NeighborEntry::cmp_dist_id`].
#[inline]
pub fn cmp_dist_id(a: (f32, u32), b: (f32, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}
