//! Event-driven simulation and analytics for forest-fire processes, pure
//! growth and self-destructive percolation on finite r-ary trees.

pub mod analytics;
pub mod engine;
pub mod experiments;
pub mod growth;
pub mod parallel;
pub mod rng;
pub mod sdp;
pub mod stats;
pub mod topology;

pub use topology::{TreeTopology, VertexId};
