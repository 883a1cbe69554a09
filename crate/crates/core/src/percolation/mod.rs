//! Sampling and connectivity: exact enumeration on small edge sets, lazy
//! cluster exploration in lattice regions, and disjoint occurrence.

pub mod disjoint;
pub mod explore;
pub mod graph;

pub use disjoint::{disjoint_occurrence_multi, disjoint_occurrence_pair, Event};
pub use explore::{explore_cluster, ClusterSample, Explorer, Family, NestedCluster, DEFAULT_CAP};
pub use graph::{enumerate_connect_prob, for_each_config, EdgeConfig, FiniteGraph, TwoPointTable};
