use std::collections::{BTreeMap, BTreeSet};

use super::skeleton::Sepset;
use crate::graph::{DirectedMixedGraph, Edge, EdgeMark};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mark {
    Open,
    Tail,
    Arrow,
}

struct Pattern {
    /// `marks[(a, b)]` is the mark at `b` on the edge between `a` and `b`.
    marks: BTreeMap<(usize, usize), Mark>,
    adj: BTreeMap<usize, BTreeSet<usize>>,
    fixed: BTreeSet<(usize, usize)>,
    sepsets: BTreeMap<(usize, usize), Sepset>,
}

impl Pattern {
    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adj.get(&a).is_some_and(|s| s.contains(&b))
    }

    fn mark(&self, a: usize, at: usize) -> Mark {
        self.marks[&(a, at)]
    }

    fn directed(&self, a: usize, b: usize) -> bool {
        self.mark(b, a) == Mark::Tail && self.mark(a, b) == Mark::Arrow
    }

    fn undirected(&self, a: usize, b: usize) -> bool {
        self.mark(b, a) == Mark::Open && self.mark(a, b) == Mark::Open
    }

    /// Non-adjacent with a known separating set. Pairs removed without a
    /// test count as shielded, so no rule relies on them.
    fn unshielded(&self, a: usize, b: usize) -> bool {
        !self.adjacent(a, b)
            && self
                .sepsets
                .get(&(a.min(b), a.max(b)))
                .is_some_and(|s| s.known().is_some())
    }

    fn is_fixed(&self, a: usize, b: usize) -> bool {
        self.fixed.contains(&(a, b)) || self.fixed.contains(&(b, a))
    }

    /// Puts an arrowhead at `b` and, where still open, a tail at `a`. An
    /// existing tail at `b` turns into an arrowhead, leaving a bidirected
    /// edge. Fixed edges never change.
    fn orient(&mut self, a: usize, b: usize) -> bool {
        if self.is_fixed(a, b) {
            return false;
        }
        let mut changed = false;
        if self.mark(a, b) != Mark::Arrow {
            self.marks.insert((a, b), Mark::Arrow);
            changed = true;
        }
        if self.mark(b, a) == Mark::Open {
            self.marks.insert((b, a), Mark::Tail);
            changed = true;
        }
        changed
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        self.adj
            .get(&v)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    }
}

/// Collider orientation for unshielded triples `i — k — j` with `k` outside
/// the separating set of `(i, j)`, then Meek rules 1–4 to closure. Fixed
/// directed edges are set first and never altered.
pub fn orient(
    template: &DirectedMixedGraph,
    adjacencies: &BTreeSet<(usize, usize)>,
    sepsets: &BTreeMap<(usize, usize), Sepset>,
    fixed: &BTreeSet<(usize, usize)>,
) -> DirectedMixedGraph {
    let mut p = Pattern {
        marks: BTreeMap::new(),
        adj: BTreeMap::new(),
        fixed: BTreeSet::new(),
        sepsets: sepsets.clone(),
    };
    for &(a, b) in adjacencies {
        p.adj.entry(a).or_default().insert(b);
        p.adj.entry(b).or_default().insert(a);
        p.marks.insert((a, b), Mark::Open);
        p.marks.insert((b, a), Mark::Open);
    }
    for &(src, dst) in fixed {
        if p.adjacent(src, dst) {
            p.marks.insert((src, dst), Mark::Arrow);
            p.marks.insert((dst, src), Mark::Tail);
            p.fixed.insert((src, dst));
        }
    }

    let nodes: Vec<usize> = p.adj.keys().copied().collect();
    let mut colliders = Vec::new();
    for &k in &nodes {
        let ns = p.neighbors(k);
        for (x, &i) in ns.iter().enumerate() {
            for &j in &ns[x + 1..] {
                if !p.unshielded(i, j) {
                    continue;
                }
                let sep = &p.sepsets[&(i.min(j), i.max(j))].set;
                if !sep.contains(&k) {
                    colliders.push((i, k, j));
                }
            }
        }
    }
    for (i, k, j) in colliders {
        p.orient(i, k);
        p.orient(j, k);
    }

    loop {
        let mut changed = false;
        for &a in &nodes {
            for b in p.neighbors(a) {
                if !p.undirected(a, b) {
                    continue;
                }
                if meek_applies(&p, a, b) {
                    changed |= p.orient(a, b);
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = template.empty_like();
    for &(a, b) in adjacencies {
        let to_edge_mark = |m: Mark| match m {
            Mark::Open => EdgeMark::Undirected,
            Mark::Tail => EdgeMark::Tail,
            Mark::Arrow => EdgeMark::Arrow,
        };
        let (ma, mb) = (p.mark(b, a), p.mark(a, b));
        let edge = match (ma, mb) {
            (Mark::Open, Mark::Open) => Edge::undirected(a, b),
            (Mark::Tail, Mark::Arrow) => Edge::directed(a, b),
            (Mark::Arrow, Mark::Tail) => Edge::directed(b, a),
            (Mark::Arrow, Mark::Arrow) => Edge::bidirected(a, b),
            _ => Edge::with_marks(a, b, to_edge_mark(ma), to_edge_mark(mb)),
        };
        out.insert_edge(edge).expect("template holds all nodes");
    }
    out
}

/// Should the undirected edge `a — b` become `a -> b`?
fn meek_applies(p: &Pattern, a: usize, b: usize) -> bool {
    let na = p.neighbors(a);
    // R1: c -> a — b, c and b unshielded
    if na.iter().any(|&c| c != b && p.directed(c, a) && p.unshielded(c, b)) {
        return true;
    }
    // R2: a -> c -> b
    if na
        .iter()
        .any(|&c| c != b && p.directed(a, c) && p.adjacent(c, b) && p.directed(c, b))
    {
        return true;
    }
    // R3: a — c -> b, a — d -> b, c and d unshielded
    let mids: Vec<usize> = na
        .iter()
        .copied()
        .filter(|&c| c != b && p.undirected(a, c) && p.adjacent(c, b) && p.directed(c, b))
        .collect();
    for (x, &c) in mids.iter().enumerate() {
        if mids[x + 1..].iter().any(|&d| p.unshielded(c, d)) {
            return true;
        }
    }
    // R4: a — d -> c -> b with a adjacent to c, d and b unshielded
    for &d in &na {
        if d == b || !p.undirected(a, d) {
            continue;
        }
        for c in p.neighbors(d) {
            if c != a
                && c != b
                && p.directed(d, c)
                && p.adjacent(a, c)
                && p.adjacent(c, b)
                && p.directed(c, b)
                && p.unshielded(d, b)
            {
                return true;
            }
        }
    }
    false
}
