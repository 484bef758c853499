//! Test-only oracles shared by the integration suites. Nothing here calls
//! into the separation code under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use context_cd::graph::{DirectedMixedGraph, Edge, EdgeMark};
use rand::seq::SliceRandom;
use rand::Rng;

/// Transitive closure over directed records (`reach[u][v]`: directed path u->...->v, reflexive).
pub fn closure(g: &DirectedMixedGraph) -> Vec<Vec<bool>> {
    let n = g.n_nodes();
    let mut reach = vec![vec![false; n]; n];
    for (v, row) in reach.iter_mut().enumerate() {
        row[v] = true;
    }
    for e in g.edges().filter(|e| e.is_directed()) {
        reach[e.src][e.dst] = true;
    }
    for k in 0..n {
        let via = reach[k].clone();
        for row in reach.iter_mut() {
            if row[k] {
                for (j, &kj) in via.iter().enumerate() {
                    if kj {
                        row[j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Every simple path from `x` to `y`, as the list of records traversed.
pub fn simple_paths(g: &DirectedMixedGraph, x: usize, y: usize) -> Vec<Vec<(usize, Edge)>> {
    fn dfs(
        g: &DirectedMixedGraph,
        v: usize,
        y: usize,
        on_path: &mut Vec<bool>,
        path: &mut Vec<(usize, Edge)>,
        out: &mut Vec<Vec<(usize, Edge)>>,
    ) {
        if v == y {
            out.push(path.clone());
            return;
        }
        let neighbors: Vec<usize> = g.neighbors(v).collect();
        for w in neighbors {
            if on_path[w] {
                continue;
            }
            for e in g.edges_between(v, w) {
                on_path[w] = true;
                path.push((w, e.clone()));
                dfs(g, w, y, on_path, path, out);
                path.pop();
                on_path[w] = false;
            }
        }
    }
    let mut on_path = vec![false; g.n_nodes()];
    on_path[x] = true;
    let mut out = Vec::new();
    dfs(g, x, y, &mut on_path, &mut Vec::new(), &mut out);
    out
}

fn arrow_at(e: &Edge, v: usize) -> bool {
    e.mark_at(v).unwrap() != EdgeMark::Tail
}

fn tail_at(e: &Edge, v: usize) -> bool {
    e.mark_at(v).unwrap() == EdgeMark::Tail
}

/// Path-blocking check. Colliders must be ancestors of `z`; non-colliders
/// in `z` block (under `sigma` only when they have a tail towards a path
/// neighbour in a different strongly connected component).
pub fn path_open(path: &[(usize, Edge)], x: usize, z: &BTreeSet<usize>, reach: &[Vec<bool>], sigma: bool) -> bool {
    let same_scc = |a: usize, b: usize| reach[a][b] && reach[b][a];
    let in_anc_z = |v: usize| z.iter().any(|&c| reach[v][c]);
    let mut prev = x;
    for k in 0..path.len().saturating_sub(1) {
        let (v, ref e_in) = path[k];
        let (next, ref e_out) = path[k + 1];
        let collider = arrow_at(e_in, v) && arrow_at(e_out, v);
        if collider {
            if !in_anc_z(v) {
                return false;
            }
        } else if z.contains(&v) {
            if !sigma {
                return false;
            }
            let points_out = (tail_at(e_in, v) && !same_scc(v, prev)) || (tail_at(e_out, v) && !same_scc(v, next));
            if points_out {
                return false;
            }
        }
        prev = v;
    }
    true
}

pub fn brute_force_separated(g: &DirectedMixedGraph, x: usize, y: usize, z: &BTreeSet<usize>, sigma: bool) -> bool {
    let reach = closure(g);
    !simple_paths(g, x, y).iter().any(|p| path_open(p, x, z, &reach, sigma))
}

/// Random directed graph. With `acyclic`, edges follow a random order;
/// otherwise each ordered pair is drawn independently (2-cycles allowed).
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, p: f64, acyclic: bool) -> DirectedMixedGraph {
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let mut g = DirectedMixedGraph::from_names(&names);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if acyclic && order[i] > order[j] {
                continue;
            }
            if rng.random_bool(p) {
                g.add_directed(i, j).unwrap();
            }
        }
    }
    g
}

/// All subsets of `items`.
pub fn subsets(items: &[usize]) -> Vec<BTreeSet<usize>> {
    (0..(1u32 << items.len()))
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect()
        })
        .collect()
}

/// Per (x, y) with x < y: paths enumerated once, then all conditioning sets.
pub fn for_all_queries(g: &DirectedMixedGraph, mut f: impl FnMut(usize, usize, &BTreeSet<usize>, bool, bool)) {
    let n = g.n_nodes();
    let reach = closure(g);
    for x in 0..n {
        for y in (x + 1)..n {
            let paths = simple_paths(g, x, y);
            let others: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
            for z in subsets(&others) {
                let d = !paths.iter().any(|p| path_open(p, x, &z, &reach, false));
                let s = !paths.iter().any(|p| path_open(p, x, &z, &reach, true));
                f(x, y, &z, d, s);
            }
        }
    }
}
