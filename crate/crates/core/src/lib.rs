//! Decomposition of multi-robot LTL missions into local reachability tasks,
//! and reactive execution of those tasks on an initially unknown grid.
//!
//! The offline pipeline is [`buchi::translate`] → [`decompose::augment`] →
//! [`decompose::prune_infeasible`] → [`decompose::decompose`] →
//! [`distgraph::DistanceGraph::build`]. [`executive::run_mission`] drives the
//! online loop.

pub mod buchi;
pub mod decompose;
pub mod distgraph;
pub mod executive;
pub mod gridworld;
pub mod localplan;
pub mod ltl;
pub mod scenario;
pub mod symbols;
