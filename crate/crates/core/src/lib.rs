//! Parallel approximate k-NN graph construction toolkit.
//!
//! The crate builds k-NN graphs by neighbor-descent refinement with
//! fixed-size sampling, per-object batch distance tables, selective updates,
//! and lock-striped neighbor lists. On top of the builder sit a two-graph
//! merge, a sharded out-of-core pipeline for datasets larger than memory,
//! standard vector/graph file formats, and a brute-force oracle with a
//! recall/quality evaluation harness.

pub mod builder;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod knn_list;
pub mod merge;
pub mod metric;
pub mod neighbor;
pub mod shard;
mod util;

pub use builder::{construct, BuildParams, BuildReport, IterStats};
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use graph::{KnnGraph, WorkGraph};
pub use knn_list::{InsertOutcome, SegmentedKnnList};
pub use metric::MetricKind;
pub use neighbor::{Flag, NeighborEntry, SENTINEL_ID};
