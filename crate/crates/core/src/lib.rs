//! Graph storage on a log-structured merge tree.
//!
//! Adjacency lists live under vertex keys as *pivot* entries (the whole
//! list) or *delta* entries (labeled edge additions and removals folded in
//! at read and compaction time). A cost model decides per update which of
//! the two to write, using a one-byte probabilistic degree counter per
//! vertex and live workload statistics.

pub mod bits;
pub mod cost;
pub mod ef;
pub mod error;
pub mod graph;
pub mod lsm;
pub mod oracle;
pub mod payload;
pub mod policy;
pub mod sketch;
pub mod varint;
pub mod workload;

pub use error::{Error, Result};
pub use graph::{Element, ElementKind, GraphConfig, GraphStats, GraphStore, Routing};
pub use lsm::{Engine, EntryKind, IoCounters, LevelingMode, TreeConfig};
pub use payload::{AdjacencyPayload, CodecMode, DirectionMode};
pub use policy::{UpdateMethod, UpdatePolicy};
