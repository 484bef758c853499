//! Directed mixed graphs over system variables and a context indicator.
//!
//! A [`DirectedMixedGraph`] carries mechanism, union, descriptive, physical
//! and labeled-union graphs alike. Records are grouped per unordered node
//! pair; a pair may hold one directed record per direction plus one
//! symmetric (undirected or bidirected) record, so `X -> Y` and `Y -> X`
//! coexist as a 2-cycle.

mod ops;
mod separation;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ops::{acyclify, labeled_union, union_of_graphs};
pub(crate) use separation::SeparationOracle;
pub use separation::{
    ancestors, d_separated, descendants, is_acyclic, sigma_separated, strongly_connected_components, SeparationQuery,
};

/// Mark at one endpoint of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeMark {
    Tail,
    Arrow,
    Undirected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub name: String,
    pub is_context: bool,
}

impl Node {
    pub fn new(id: usize, name: impl Into<String>) -> Self {
        Node {
            id,
            name: name.into(),
            is_context: false,
        }
    }

    pub fn context(id: usize, name: impl Into<String>) -> Self {
        Node {
            id,
            name: name.into(),
            is_context: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub src_mark: EdgeMark,
    pub dst_mark: EdgeMark,
    #[serde(default)]
    pub labels: BTreeSet<u32>,
}

impl Edge {
    pub fn directed(src: usize, dst: usize) -> Self {
        Self::with_marks(src, dst, EdgeMark::Tail, EdgeMark::Arrow)
    }

    pub fn undirected(a: usize, b: usize) -> Self {
        Self::with_marks(a.min(b), a.max(b), EdgeMark::Undirected, EdgeMark::Undirected)
    }

    pub fn bidirected(a: usize, b: usize) -> Self {
        Self::with_marks(a.min(b), a.max(b), EdgeMark::Arrow, EdgeMark::Arrow)
    }

    pub fn with_marks(src: usize, dst: usize, src_mark: EdgeMark, dst_mark: EdgeMark) -> Self {
        Edge {
            src,
            dst,
            src_mark,
            dst_mark,
            labels: BTreeSet::new(),
        }
    }

    pub fn labeled(mut self, labels: impl IntoIterator<Item = u32>) -> Self {
        self.labels = labels.into_iter().collect();
        self
    }

    /// `src -> dst` with a tail at the source and an arrowhead at the target.
    pub fn is_directed(&self) -> bool {
        self.src_mark == EdgeMark::Tail && self.dst_mark == EdgeMark::Arrow
    }

    /// Mark of this record at node `v`, if `v` is one of its endpoints.
    pub fn mark_at(&self, v: usize) -> Option<EdgeMark> {
        if v == self.src {
            Some(self.src_mark)
        } else if v == self.dst {
            Some(self.dst_mark)
        } else {
            None
        }
    }

    pub fn other(&self, v: usize) -> usize {
        if v == self.src {
            self.dst
        } else {
            self.src
        }
    }

    fn slot(&self) -> Slot {
        match (self.src_mark, self.dst_mark) {
            (EdgeMark::Tail, EdgeMark::Arrow) => Slot::Forward(self.src),
            (EdgeMark::Arrow, EdgeMark::Tail) => Slot::Forward(self.dst),
            _ => Slot::Symmetric,
        }
    }

    /// Rewrites `Arrow <- Tail` records into the canonical `Tail -> Arrow` form
    /// and symmetric records so that `src < dst`.
    fn canonical(mut self) -> Self {
        let reversed = self.src_mark == EdgeMark::Arrow && self.dst_mark == EdgeMark::Tail;
        if reversed || (!self.is_directed() && self.src > self.dst) {
            std::mem::swap(&mut self.src, &mut self.dst);
            std::mem::swap(&mut self.src_mark, &mut self.dst_mark);
        }
        self
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Slot {
    /// Directed record, keyed by its tail node.
    Forward(usize),
    Symmetric,
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectedMixedGraph {
    nodes: Vec<Node>,
    pairs: BTreeMap<(usize, usize), Vec<Edge>>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl DirectedMixedGraph {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidArgument(format!(
                    "node ids must be 0..n in order, found {} at position {}",
                    node.id, i
                )));
            }
        }
        if nodes.iter().filter(|n| n.is_context).count() > 1 {
            return Err(Error::InvalidArgument(
                "at most one node may be the context indicator".into(),
            ));
        }
        let n = nodes.len();
        Ok(DirectedMixedGraph {
            nodes,
            pairs: BTreeMap::new(),
            adjacency: vec![BTreeSet::new(); n],
        })
    }

    /// Empty graph with system nodes `X1..XD` followed by the indicator `R`.
    pub fn with_context(system_vars: usize) -> Self {
        let mut nodes: Vec<Node> = (0..system_vars)
            .map(|i| Node {
                id: i,
                name: format!("X{}", i + 1),
                is_context: false,
            })
            .collect();
        nodes.push(Node {
            id: system_vars,
            name: "R".into(),
            is_context: true,
        });
        Self::new(nodes).expect("generated layout is valid")
    }

    /// Empty graph over plain named nodes, none of them a context indicator.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        let nodes = names
            .iter()
            .enumerate()
            .map(|(i, s)| Node {
                id: i,
                name: s.as_ref().to_string(),
                is_context: false,
            })
            .collect();
        Self::new(nodes).expect("generated layout is valid")
    }

    /// Same nodes, no edges.
    pub fn empty_like(&self) -> Self {
        Self::new(self.nodes.clone()).expect("nodes already validated")
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_name(&self, v: usize) -> &str {
        &self.nodes[v].name
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn context_node(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.is_context)
    }

    pub fn same_nodes(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }

    pub(crate) fn check_node(&self, v: usize) -> Result<()> {
        if v < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(v))
        }
    }

    /// Inserts a record, replacing an existing record in the same slot
    /// (same direction, or the symmetric slot).
    pub fn insert_edge(&mut self, edge: Edge) -> Result<()> {
        self.check_node(edge.src)?;
        self.check_node(edge.dst)?;
        if edge.src == edge.dst {
            return Err(Error::InvalidEdge {
                src: edge.src,
                dst: edge.dst,
                reason: "self-loops are not allowed",
            });
        }
        let edge = edge.canonical();
        let slot = edge.slot();
        let key = pair_key(edge.src, edge.dst);
        let records = self.pairs.entry(key).or_default();
        records.retain(|e| e.slot() != slot);
        records.push(edge);
        records.sort();
        self.adjacency[key.0].insert(key.1);
        self.adjacency[key.1].insert(key.0);
        Ok(())
    }

    pub fn add_directed(&mut self, src: usize, dst: usize) -> Result<()> {
        self.insert_edge(Edge::directed(src, dst))
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) -> Result<()> {
        self.insert_edge(Edge::undirected(a, b))
    }

    pub fn add_bidirected(&mut self, a: usize, b: usize) -> Result<()> {
        self.insert_edge(Edge::bidirected(a, b))
    }

    /// Removes every record between `a` and `b`.
    pub fn remove_pair(&mut self, a: usize, b: usize) {
        let key = pair_key(a, b);
        if self.pairs.remove(&key).is_some() {
            self.adjacency[key.0].remove(&key.1);
            self.adjacency[key.1].remove(&key.0);
        }
    }

    /// Removes only the directed record `src -> dst`.
    pub fn remove_directed(&mut self, src: usize, dst: usize) {
        let key = pair_key(src, dst);
        if let Some(records) = self.pairs.get_mut(&key) {
            records.retain(|e| !(e.is_directed() && e.src == src && e.dst == dst));
            if records.is_empty() {
                self.remove_pair(src, dst);
            }
        }
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        a < self.adjacency.len() && self.adjacency[a].contains(&b)
    }

    pub fn has_directed(&self, src: usize, dst: usize) -> bool {
        self.edges_between(src, dst)
            .iter()
            .any(|e| e.is_directed() && e.src == src && e.dst == dst)
    }

    pub fn edges_between(&self, a: usize, b: usize) -> &[Edge] {
        self.pairs.get(&pair_key(a, b)).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// All records, ordered by node pair.
    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.pairs.values().flatten()
    }

    pub fn n_edges(&self) -> usize {
        self.pairs.values().map(Vec::len).sum()
    }

    /// Adjacent node pairs `(a, b)` with `a < b`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.pairs.keys().copied().collect()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().copied()
    }

    pub fn parents(&self, v: usize) -> Vec<usize> {
        self.neighbors(v).filter(|&u| self.has_directed(u, v)).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        self.neighbors(v).filter(|&u| self.has_directed(v, u)).collect()
    }

    /// Directed adjacency lists (`out[v]` = children of `v`).
    pub(crate) fn directed_out(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for e in self.edges().filter(|e| e.is_directed()) {
            out[e.src].push(e.dst);
        }
        out
    }

    /// Copy without context labels on any record.
    pub fn without_labels(&self) -> Self {
        let mut g = self.clone();
        for records in g.pairs.values_mut() {
            for e in records.iter_mut() {
                e.labels.clear();
            }
        }
        g
    }

    /// Copy keeping only records whose endpoints both satisfy `keep`.
    pub fn induced(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut g = self.empty_like();
        for e in self.edges() {
            if keep(e.src) && keep(e.dst) {
                g.insert_edge(e.clone()).expect("edge already valid");
            }
        }
        g
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GraphDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: GraphDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

/// On-disk form: `{"nodes":[{"id","name","is_context"}], "edges":[{"src","dst","src_mark","dst_mark","labels"}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphDoc {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl From<&DirectedMixedGraph> for GraphDoc {
    fn from(g: &DirectedMixedGraph) -> Self {
        GraphDoc {
            nodes: g.nodes.clone(),
            edges: g.edges().cloned().collect(),
        }
    }
}

impl TryFrom<GraphDoc> for DirectedMixedGraph {
    type Error = Error;

    fn try_from(doc: GraphDoc) -> Result<Self> {
        let mut g = DirectedMixedGraph::new(doc.nodes)?;
        for e in doc.edges {
            g.insert_edge(e)?;
        }
        Ok(g)
    }
}

impl Serialize for DirectedMixedGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DirectedMixedGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = GraphDoc::deserialize(d)?;
        doc.try_into().map_err(serde::de::Error::custom)
    }
}
