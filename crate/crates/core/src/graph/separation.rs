use std::collections::{BTreeSet, VecDeque};

use super::{DirectedMixedGraph, EdgeMark};
use crate::error::{Error, Result};

/// Is `x` separated from `y` given `z`?
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SeparationQuery {
    pub x: usize,
    pub y: usize,
    pub z: BTreeSet<usize>,
}

impl SeparationQuery {
    pub fn new(x: usize, y: usize, z: impl IntoIterator<Item = usize>) -> Self {
        SeparationQuery {
            x,
            y,
            z: z.into_iter().collect(),
        }
    }

    pub(crate) fn validate(&self, g: &DirectedMixedGraph) -> Result<()> {
        g.check_node(self.x)?;
        g.check_node(self.y)?;
        for &v in &self.z {
            g.check_node(v)?;
        }
        if self.x == self.y {
            return Err(Error::InvalidQuery("x and y must differ".into()));
        }
        if self.z.contains(&self.x) || self.z.contains(&self.y) {
            return Err(Error::InvalidQuery("conditioning set must not contain x or y".into()));
        }
        Ok(())
    }
}

fn reach(out: &[Vec<usize>], start: impl IntoIterator<Item = usize>) -> BTreeSet<usize> {
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut stack: Vec<usize> = Vec::new();
    for s in start {
        if seen.insert(s) {
            stack.push(s);
        }
    }
    while let Some(v) = stack.pop() {
        for &w in &out[v] {
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen
}

fn reversed(out: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut rev = vec![Vec::new(); out.len()];
    for (v, children) in out.iter().enumerate() {
        for &c in children {
            rev[c].push(v);
        }
    }
    rev
}

/// All `u` with a directed path `u -> ... -> v`, including `v` itself.
pub fn ancestors(g: &DirectedMixedGraph, v: usize) -> Result<BTreeSet<usize>> {
    g.check_node(v)?;
    Ok(reach(&reversed(&g.directed_out()), [v]))
}

/// All `u` with a directed path `v -> ... -> u`, including `v` itself.
pub fn descendants(g: &DirectedMixedGraph, v: usize) -> Result<BTreeSet<usize>> {
    g.check_node(v)?;
    Ok(reach(&g.directed_out(), [v]))
}

/// Tarjan's algorithm over directed records. Components are sorted
/// internally and listed by smallest member.
pub fn strongly_connected_components(g: &DirectedMixedGraph) -> Vec<Vec<usize>> {
    let out = g.directed_out();
    let mut comps = tarjan(&out);
    for c in comps.iter_mut() {
        c.sort_unstable();
    }
    comps.sort();
    comps
}

fn tarjan(out: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = out.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        // (node, next child position)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < out[v].len() {
                let w = out[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// True iff every strongly connected component is a singleton.
pub fn is_acyclic(g: &DirectedMixedGraph) -> bool {
    tarjan(&g.directed_out()).iter().all(|c| c.len() == 1)
}

/// Component id per node.
pub(crate) fn scc_ids(g: &DirectedMixedGraph) -> Vec<usize> {
    let mut ids = vec![0; g.n_nodes()];
    for (i, comp) in strongly_connected_components(g).iter().enumerate() {
        for &v in comp {
            ids[v] = i;
        }
    }
    ids
}

/// Precomputed incidence and component structure for repeated separation
/// queries against one graph.
///
/// Undirected endpoint marks behave like arrowheads (the bidirected reading
/// used inside acyclified components).
#[derive(Clone, Debug)]
pub(crate) struct SeparationOracle {
    /// `(neighbor, mark at self, mark at neighbor)` per incident record.
    incidence: Vec<Vec<(usize, EdgeMark, EdgeMark)>>,
    parents: Vec<Vec<usize>>,
    scc: Vec<usize>,
    acyclic: bool,
}

impl SeparationOracle {
    pub(crate) fn new(g: &DirectedMixedGraph) -> Self {
        let n = g.n_nodes();
        let mut incidence = vec![Vec::new(); n];
        for e in g.edges() {
            incidence[e.src].push((e.dst, e.src_mark, e.dst_mark));
            incidence[e.dst].push((e.src, e.dst_mark, e.src_mark));
        }
        let out = g.directed_out();
        let scc = scc_ids(g);
        let acyclic = {
            let mut sizes = vec![0usize; n];
            for &c in &scc {
                sizes[c] += 1;
            }
            sizes.iter().all(|&s| s <= 1)
        };
        SeparationOracle {
            incidence,
            parents: reversed(&out),
            scc,
            acyclic,
        }
    }

    pub(crate) fn is_acyclic(&self) -> bool {
        self.acyclic
    }

    /// Walk-based reachability. A collider passes iff it is an ancestor of
    /// `z`; a non-collider in `z` blocks, except under `sigma` where it only
    /// blocks if it has a tail towards a walk neighbour outside its
    /// strongly connected component.
    pub(crate) fn separated(&self, x: usize, y: usize, z: &BTreeSet<usize>, sigma: bool) -> bool {
        let n = self.incidence.len();
        let mut in_z = vec![false; n];
        for &v in z {
            in_z[v] = true;
        }
        let anc_z = reach(&self.parents, z.iter().copied());
        let mut anc = vec![false; n];
        for v in anc_z {
            anc[v] = true;
        }

        // state = (node, arrowhead at node on arriving edge, tail at node
        // towards a different component on arriving edge)
        let idx = |v: usize, arrow: bool, tail_out: bool| v * 4 + (arrow as usize) * 2 + tail_out as usize;
        let mut visited = vec![false; n * 4];
        let mut queue = VecDeque::new();

        for &(w, _, mark_w) in &self.incidence[x] {
            let arrow = mark_w != EdgeMark::Tail;
            let tail_out = mark_w == EdgeMark::Tail && self.scc[x] != self.scc[w];
            if !visited[idx(w, arrow, tail_out)] {
                visited[idx(w, arrow, tail_out)] = true;
                queue.push_back((w, arrow, tail_out));
            }
        }

        while let Some((v, arrow_in, tail_out_in)) = queue.pop_front() {
            if v == y {
                return false;
            }
            for &(w, mark_v, mark_w) in &self.incidence[v] {
                let arrow_out = mark_v != EdgeMark::Tail;
                let collider = arrow_in && arrow_out;
                let pass = if collider {
                    anc[v]
                } else if !in_z[v] {
                    true
                } else if sigma {
                    let tail_out_next = mark_v == EdgeMark::Tail && self.scc[v] != self.scc[w];
                    !(tail_out_in || tail_out_next)
                } else {
                    false
                };
                if !pass {
                    continue;
                }
                let arrow = mark_w != EdgeMark::Tail;
                let tail_out = mark_w == EdgeMark::Tail && self.scc[v] != self.scc[w];
                let k = idx(w, arrow, tail_out);
                if !visited[k] {
                    visited[k] = true;
                    queue.push_back((w, arrow, tail_out));
                }
            }
        }
        true
    }
}

/// d-separation on an acyclic graph.
pub fn d_separated(g: &DirectedMixedGraph, q: &SeparationQuery) -> Result<bool> {
    q.validate(g)?;
    let oracle = SeparationOracle::new(g);
    if !oracle.is_acyclic() {
        return Err(Error::CyclicGraph);
    }
    Ok(oracle.separated(q.x, q.y, &q.z, false))
}

/// σ-separation; reduces to d-separation on acyclic graphs.
pub fn sigma_separated(g: &DirectedMixedGraph, q: &SeparationQuery) -> Result<bool> {
    q.validate(g)?;
    Ok(SeparationOracle::new(g).separated(q.x, q.y, &q.z, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> DirectedMixedGraph {
        let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
        let mut g = DirectedMixedGraph::from_names(&names);
        for &(a, b) in edges {
            g.add_directed(a, b).unwrap();
        }
        g
    }

    #[test]
    fn ancestors_of_chain_and_cycle() {
        let chain = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(ancestors(&chain, 2).unwrap(), BTreeSet::from([0, 1, 2]));
        let isolated = graph(2, &[]);
        assert_eq!(ancestors(&isolated, 1).unwrap(), BTreeSet::from([1]));
        let two_cycle = graph(2, &[(0, 1), (1, 0)]);
        assert_eq!(ancestors(&two_cycle, 1).unwrap(), BTreeSet::from([0, 1]));
        assert!(matches!(ancestors(&chain, 9), Err(Error::UnknownNode(9))));
    }

    #[test]
    fn scc_examples() {
        let dag = graph(4, &[(0, 1), (1, 2), (0, 3)]);
        assert_eq!(
            strongly_connected_components(&dag),
            vec![vec![0], vec![1], vec![2], vec![3]]
        );
        let two = graph(3, &[(0, 1), (1, 0)]);
        assert_eq!(strongly_connected_components(&two), vec![vec![0, 1], vec![2]]);
        let three = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(strongly_connected_components(&three), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn acyclicity() {
        assert!(is_acyclic(&graph(0, &[])));
        assert!(!is_acyclic(&graph(2, &[(0, 1), (1, 0)])));
        assert!(is_acyclic(&graph(3, &[(0, 1), (1, 2)])));
    }

    #[test]
    fn d_separation_basics() {
        // X -> Z -> Y
        let chain = graph(3, &[(0, 2), (2, 1)]);
        assert!(d_separated(&chain, &SeparationQuery::new(0, 1, [2])).unwrap());
        assert!(!d_separated(&chain, &SeparationQuery::new(0, 1, [])).unwrap());
        // X -> R <- T
        let collider = graph(3, &[(0, 1), (2, 1)]);
        assert!(!d_separated(&collider, &SeparationQuery::new(0, 2, [1])).unwrap());
        assert!(d_separated(&collider, &SeparationQuery::new(0, 2, [])).unwrap());
        // descendant of a collider opens it
        let desc = graph(4, &[(0, 1), (2, 1), (1, 3)]);
        assert!(!d_separated(&desc, &SeparationQuery::new(0, 2, [3])).unwrap());
    }

    #[test]
    fn d_separation_rejects_cycles_and_bad_queries() {
        let cyc = graph(3, &[(0, 1), (1, 0), (2, 0)]);
        assert!(matches!(
            d_separated(&cyc, &SeparationQuery::new(2, 1, [0])),
            Err(Error::CyclicGraph)
        ));
        let g = graph(3, &[]);
        assert!(d_separated(&g, &SeparationQuery::new(0, 0, [])).is_err());
        assert!(d_separated(&g, &SeparationQuery::new(0, 1, [1])).is_err());
    }

    #[test]
    fn sigma_separation_two_cycle() {
        // C -> A <-> B as A -> B, B -> A
        let g = graph(3, &[(0, 1), (1, 0), (2, 0)]);
        assert!(!sigma_separated(&g, &SeparationQuery::new(2, 1, [0])).unwrap());
        assert!(!sigma_separated(&g, &SeparationQuery::new(2, 1, [])).unwrap());
    }

    #[test]
    fn sigma_matches_d_on_dags() {
        let g = graph(5, &[(0, 1), (1, 2), (3, 2), (2, 4), (0, 3)]);
        for x in 0..5 {
            for y in 0..5 {
                if x == y {
                    continue;
                }
                let others: Vec<usize> = (0..5).filter(|&v| v != x && v != y).collect();
                for mask in 0..(1u32 << others.len()) {
                    let z = others
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, &v)| v);
                    let q = SeparationQuery::new(x, y, z);
                    assert_eq!(d_separated(&g, &q).unwrap(), sigma_separated(&g, &q).unwrap());
                }
            }
        }
    }
}
