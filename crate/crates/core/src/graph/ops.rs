use std::collections::{BTreeMap, BTreeSet};

use super::separation::scc_ids;
use super::{DirectedMixedGraph, Edge, EdgeMark};
use crate::error::{Error, Result};

/// Acyclification: inside every strongly connected component the internal
/// edges are replaced by a complete undirected component, and an edge into
/// any member of a component points at every member.
pub fn acyclify(g: &DirectedMixedGraph) -> DirectedMixedGraph {
    let scc = scc_ids(g);
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, &id) in scc.iter().enumerate() {
        members.entry(id).or_default().push(v);
    }

    let mut out = g.empty_like();
    for e in g.edges() {
        if e.is_directed() {
            if scc[e.src] == scc[e.dst] {
                continue;
            }
            for &target in &members[&scc[e.dst]] {
                out.add_directed(e.src, target).expect("nodes exist");
            }
        } else {
            out.insert_edge(e.clone()).expect("nodes exist");
        }
    }
    for comp in members.values().filter(|c| c.len() > 1) {
        for (i, &a) in comp.iter().enumerate() {
            for &b in &comp[i + 1..] {
                out.add_undirected(a, b).expect("nodes exist");
            }
        }
    }
    out
}

/// Orientation content of the records between one node pair.
#[derive(Default)]
struct PairSummary {
    /// `(tail, head)` of every direction asserted.
    directions: BTreeSet<(usize, usize)>,
    undirected: bool,
}

fn summarize(records: &[Edge]) -> PairSummary {
    let mut s = PairSummary::default();
    for e in records {
        match (e.src_mark, e.dst_mark) {
            (EdgeMark::Tail, EdgeMark::Arrow) => {
                s.directions.insert((e.src, e.dst));
            }
            (EdgeMark::Arrow, EdgeMark::Tail) => {
                s.directions.insert((e.dst, e.src));
            }
            (EdgeMark::Arrow, EdgeMark::Arrow) => {
                s.directions.insert((e.src, e.dst));
                s.directions.insert((e.dst, e.src));
            }
            _ => s.undirected = true,
        }
    }
    s
}

fn check_same_nodes<'a>(mut graphs: impl Iterator<Item = &'a DirectedMixedGraph>) -> Result<&'a DirectedMixedGraph> {
    let first = graphs
        .next()
        .ok_or_else(|| Error::InvalidArgument("need at least one graph".into()))?;
    if graphs.all(|g| g.same_nodes(first)) {
        Ok(first)
    } else {
        Err(Error::NodeSetMismatch)
    }
}

/// Edge present iff present in at least one input. Directions are merged per
/// direction, so opposite orientations yield a 2-cycle; an undirected record
/// survives only when no input orients the pair. Labels are dropped.
pub fn union_of_graphs(graphs: &[DirectedMixedGraph]) -> Result<DirectedMixedGraph> {
    let first = check_same_nodes(graphs.iter())?;
    let mut merged: BTreeMap<(usize, usize), PairSummary> = BTreeMap::new();
    for g in graphs {
        for (&key, records) in &g.pairs {
            let s = summarize(records);
            let entry = merged.entry(key).or_default();
            entry.directions.extend(s.directions);
            entry.undirected |= s.undirected;
        }
    }
    let mut out = first.empty_like();
    for ((a, b), s) in merged {
        if s.directions.is_empty() {
            out.add_undirected(a, b)?;
        } else {
            for (tail, head) in s.directions {
                out.add_directed(tail, head)?;
            }
        }
    }
    Ok(out)
}

/// Union with context labels: a record present in every context is
/// unlabeled, one present in a proper subset of contexts carries that subset
/// as its label set, one present in none is absent.
pub fn labeled_union(graphs: &BTreeMap<u32, DirectedMixedGraph>) -> Result<DirectedMixedGraph> {
    if graphs.len() < 2 {
        return Err(Error::InvalidArgument(
            "labeled union needs at least two contexts".into(),
        ));
    }
    let first = check_same_nodes(graphs.values())?;
    let all: BTreeSet<u32> = graphs.keys().copied().collect();

    let mut directed: BTreeMap<(usize, usize), BTreeSet<u32>> = BTreeMap::new();
    let mut undirected: BTreeMap<(usize, usize), BTreeSet<u32>> = BTreeMap::new();
    for (&r, g) in graphs {
        for (&key, records) in &g.pairs {
            let s = summarize(records);
            if s.directions.is_empty() {
                undirected.entry(key).or_default().insert(r);
            }
            for d in s.directions {
                directed.entry(d).or_default().insert(r);
            }
        }
    }

    let label = |present: BTreeSet<u32>| if present == all { BTreeSet::new() } else { present };
    let mut out = first.empty_like();
    for ((tail, head), present) in directed {
        let mut e = Edge::directed(tail, head);
        e.labels = label(present);
        out.insert_edge(e)?;
    }
    for ((a, b), present) in undirected {
        let mut e = Edge::undirected(a, b);
        e.labels = label(present);
        out.insert_edge(e)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("V{i}")).collect()
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> DirectedMixedGraph {
        let mut g = DirectedMixedGraph::from_names(&names(n));
        for &(a, b) in edges {
            g.add_directed(a, b).unwrap();
        }
        g
    }

    #[test]
    fn acyclify_dag_is_identity() {
        let g = graph(4, &[(0, 1), (1, 2), (3, 2)]);
        assert_eq!(acyclify(&g), g);
    }

    #[test]
    fn acyclify_two_cycle_with_parent() {
        // A=0, B=1, C=2: A <-> B, C -> A
        let g = graph(3, &[(0, 1), (1, 0), (2, 0)]);
        let mut expected = graph(3, &[(2, 0), (2, 1)]);
        expected.add_undirected(0, 1).unwrap();
        assert_eq!(acyclify(&g), expected);
    }

    #[test]
    fn acyclify_three_cycle() {
        let g = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let a = acyclify(&g);
        for (x, y) in [(0, 1), (0, 2), (1, 2)] {
            assert_eq!(a.edges_between(x, y), &[Edge::undirected(x, y)]);
        }
        assert_eq!(a.n_edges(), 3);
    }

    #[test]
    fn union_examples() {
        let g = graph(2, &[(0, 1)]);
        assert_eq!(union_of_graphs(&[g.clone(), g.clone()]).unwrap(), g);
        assert_eq!(union_of_graphs(&[g.clone(), graph(2, &[])]).unwrap(), g);
        let both = union_of_graphs(&[g.clone(), graph(2, &[(1, 0)])]).unwrap();
        assert!(both.has_directed(0, 1) && both.has_directed(1, 0));
    }

    #[test]
    fn union_rejects_mismatched_nodes() {
        let a = graph(2, &[]);
        let b = graph(3, &[]);
        assert!(matches!(union_of_graphs(&[a, b]), Err(Error::NodeSetMismatch)));
    }

    #[test]
    fn labeled_union_examples() {
        let mut graphs = BTreeMap::new();
        graphs.insert(0, graph(3, &[(0, 1)]));
        graphs.insert(1, graph(3, &[(0, 1), (1, 2)]));
        let lu = labeled_union(&graphs).unwrap();
        assert_eq!(lu.edges_between(0, 1), &[Edge::directed(0, 1)]);
        assert_eq!(lu.edges_between(1, 2), &[Edge::directed(1, 2).labeled([1])]);
        assert!(!lu.adjacent(0, 2));
    }

    #[test]
    fn labeled_union_needs_two_contexts() {
        let mut graphs = BTreeMap::new();
        graphs.insert(0, graph(2, &[]));
        assert!(labeled_union(&graphs).is_err());
        graphs.insert(1, graph(3, &[]));
        assert!(matches!(labeled_union(&graphs), Err(Error::NodeSetMismatch)));
    }
}
