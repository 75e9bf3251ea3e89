//! Hop-distance graph over the states found by the decomposition.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use thiserror::Error;

use crate::decompose::Decomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Distance {
    Finite(usize),
    Infinite,
}

impl Distance {
    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }

    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no edge {0} -> {1}")]
    MissingEdge(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceGraph {
    pub nodes: BTreeSet<usize>,
    pub edges: BTreeSet<(usize, usize)>,
    pub accepting_edges: BTreeSet<(usize, usize)>,
    /// Sources of accepting edges.
    pub v_f: BTreeSet<usize>,
    pub dist_to_vf: BTreeMap<usize, Distance>,
}

impl DistanceGraph {
    /// One edge per pair with a nonempty decomposable symbol set; the edge is
    /// accepting if any witness run passes through an accepting state.
    pub fn build(dec: &Decomposition) -> DistanceGraph {
        let edges: BTreeSet<(usize, usize)> = dec
            .sigma_dec
            .iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(k, _)| *k)
            .collect();
        let accepting_edges = edges
            .iter()
            .filter(|k| {
                dec.witnesses
                    .get(k)
                    .into_iter()
                    .flatten()
                    .any(|w| w.accepting)
            })
            .copied()
            .collect();
        DistanceGraph::from_parts(dec.d_set.clone(), edges, accepting_edges)
    }

    /// Builds from raw parts; `accepting_edges` is intersected with `edges`.
    pub fn from_parts(
        nodes: BTreeSet<usize>,
        edges: BTreeSet<(usize, usize)>,
        accepting_edges: BTreeSet<(usize, usize)>,
    ) -> DistanceGraph {
        let accepting_edges: BTreeSet<(usize, usize)> =
            accepting_edges.intersection(&edges).copied().collect();
        let mut g = DistanceGraph {
            nodes,
            edges,
            accepting_edges,
            v_f: BTreeSet::new(),
            dist_to_vf: BTreeMap::new(),
        };
        g.recompute();
        g
    }

    fn recompute(&mut self) {
        self.v_f = self.accepting_edges.iter().map(|(s, _)| *s).collect();
        let mut preds: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(s, d) in &self.edges {
            preds.entry(d).or_default().push(s);
        }
        self.dist_to_vf = bfs(&self.nodes, self.v_f.iter().copied(), |q| {
            preds.get(&q).cloned().unwrap_or_default()
        });
    }

    pub fn successors(&self, q: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((q, 0)..=(q, usize::MAX)).map(|(_, d)| *d)
    }

    pub fn is_accepting_edge(&self, q: usize, q2: usize) -> bool {
        self.accepting_edges.contains(&(q, q2))
    }

    /// Hop count of a shortest path from `q` to `q2`.
    pub fn distance(&self, q: usize, q2: usize) -> Distance {
        let d = bfs(&self.nodes, [q], |x| self.successors(x).collect());
        d.get(&q2).copied().unwrap_or(Distance::Infinite)
    }

    pub fn distance_to_vf(&self, q: usize) -> Distance {
        self.dist_to_vf
            .get(&q)
            .copied()
            .unwrap_or(Distance::Infinite)
    }

    /// Copy without the edge `q -> q2`, with `v_f` and distances recomputed.
    pub fn remove_edge(&self, q: usize, q2: usize) -> Result<DistanceGraph, GraphError> {
        if !self.edges.contains(&(q, q2)) {
            return Err(GraphError::MissingEdge(q, q2));
        }
        let mut g = self.clone();
        g.edges.remove(&(q, q2));
        g.accepting_edges.remove(&(q, q2));
        g.recompute();
        Ok(g)
    }

    /// Graphviz rendering; accepting edges are red and dashed.
    pub fn to_dot(&self, aux: Option<usize>) -> String {
        let mut s = String::from("digraph G {\n");
        for &q in &self.nodes {
            let name = if Some(q) == aux {
                "aux".to_string()
            } else {
                format!("q{q}")
            };
            let shape = if self.v_f.contains(&q) {
                "doublecircle"
            } else {
                "circle"
            };
            writeln!(
                s,
                "  {q} [label=\"{name}\\nd_F={}\", shape={shape}];",
                self.distance_to_vf(q)
            )
            .unwrap();
        }
        for &(a, b) in &self.edges {
            if self.accepting_edges.contains(&(a, b)) {
                writeln!(s, "  {a} -> {b} [color=red, style=dashed];").unwrap();
            } else {
                writeln!(s, "  {a} -> {b};").unwrap();
            }
        }
        s.push_str("}\n");
        s
    }
}

/// Breadth-first distances from `sources` following `next`.
fn bfs(
    nodes: &BTreeSet<usize>,
    sources: impl IntoIterator<Item = usize>,
    next: impl Fn(usize) -> Vec<usize>,
) -> BTreeMap<usize, Distance> {
    let mut dist: BTreeMap<usize, Distance> =
        nodes.iter().map(|&q| (q, Distance::Infinite)).collect();
    let mut queue = VecDeque::new();
    for s in sources {
        dist.insert(s, Distance::Finite(0));
        queue.push_back((s, 0));
    }
    while let Some((q, d)) = queue.pop_front() {
        for n in next(q) {
            if dist.get(&n) == Some(&Distance::Infinite) {
                dist.insert(n, Distance::Finite(d + 1));
                queue.push_back((n, d + 1));
            }
        }
    }
    dist
}
